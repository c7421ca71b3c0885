"""Stage-by-stage pipeline orchestration.

Each stage reads prerequisite artifacts (checked via manifests), does its
work, and writes its own artifacts plus a manifest carrying the config
digest and seed. Stage 2 (`attack`) is oracle-free and verifies the query
ledger is bit-identical around the whole stage.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import torch

from . import analysis as analysis_mod
from . import plots
from .artifacts import (
    ConfigMismatchError,
    check_digest,
    output_lock,
    read_manifest,
    require_artifact,
    write_manifest,
)
from .baselines import BaselineKind, BaselineSpec, run_baseline
from .config import ExperimentConfig
from .datasets import (
    build_pseudo_labeled_public,
    load_pseudo_dataset,
    load_split,
    save_pseudo_dataset,
    save_split,
)
from .evaluation import EvaluationModel, evaluate_attack, train_eval_model
from .training import ClassifierTrainConfig
from .inversion import (
    InversionConfig,
    InversionStyle,
    ReconstructionSet,
    invert_conditional,
    invert_prior_regularized,
    select_final,
)
from .nets import ClassAgnosticGenerator, Discriminator, Generator, build_classifier
from .oracle import ExperimenterToken, QueryLedger, TargetModel, deploy_target, train_target
from .surrogate import SurrogateModel, Provenance, build_ensemble, extract_cd, generate_fake_dataset, train_surrogate
from .tacgan import train_acgan, train_tacgan

STAGES = (
    "prepare-data",
    "train-target",
    "train-tacgan",
    "train-surrogate",
    "run-baseline",
    "attack",
    "evaluate",
    "analyze",
    "report",
)

CONDITIONAL_DESIGNS = ("cd", "s", "ensemble")


class Paths:
    def __init__(self, out: Path):
        self.out = Path(out)
        self.split = self.out / "data" / "split"
        self.data_manifest = self.out / "data" / "manifest.json"
        self.target = self.out / "target" / "target.pt"
        self.target_manifest = self.out / "target" / "manifest.json"
        self.ledger = self.out / "target" / "ledger.json"
        self.gan = self.out / "tacgan" / "gan.pt"
        self.gan_manifest = self.out / "tacgan" / "manifest.json"
        self.gamma_csv = self.out / "tacgan" / "gamma.csv"
        self.fake_ds = self.out / "surrogates" / "fake_dataset"
        self.surrogate_dir = self.out / "surrogates"
        self.surrogate_manifest = self.out / "surrogates" / "manifest.json"
        self.baseline_dir = self.out / "baselines"
        self.baseline_manifest = self.out / "baselines" / "manifest.json"
        self.attack_dir = self.out / "attacks"
        self.attack_manifest = self.out / "attacks" / "manifest.json"
        self.eval_model = self.out / "eval" / "eval.pt"
        self.metrics = self.out / "eval" / "metrics.json"
        self.eval_manifest = self.out / "eval" / "manifest.json"
        self.analysis_dir = self.out / "analysis"
        self.analysis_manifest = self.out / "analysis" / "manifest.json"
        self.report_dir = self.out / "report"

    def surrogate_model(self, arch: str) -> Path:
        return self.surrogate_dir / f"s_{arch}.pt"

    def surrogate_checkpoint(self, arch: str, epoch: int) -> Path:
        return self.surrogate_dir / "checkpoints" / f"s_{arch}_ep{epoch}.pt"

    def baseline_model(self, kind: str) -> Path:
        return self.baseline_dir / kind / "surrogate.pt"

    def baseline_gan(self, kind: str) -> Path:
        return self.baseline_dir / kind / "gan.pt"

    def attack_file(self, row: str, seed: int) -> Path:
        return self.attack_dir / row / f"seed{seed}.npz"


# ---------------------------------------------------------------------------
# model (de)serialisation helpers

def _save_target(target: TargetModel, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state": target.net.state_dict(),
            "architecture_id": target.architecture_id,
            "num_classes": target.num_classes,
            "input_shape": target.input_shape,
            "pixel_range": target.pixel_range,
            "manifest": target.manifest,
        },
        path,
    )


def _load_target(path: Path) -> TargetModel:
    blob = torch.load(path, weights_only=False)
    net = build_classifier(blob["architecture_id"], blob["num_classes"], blob["input_shape"])
    net.load_state_dict(blob["state"])
    return TargetModel(
        net=net,
        architecture_id=blob["architecture_id"],
        num_classes=blob["num_classes"],
        input_shape=blob["input_shape"],
        pixel_range=blob["pixel_range"],
        manifest=blob["manifest"],
    )


def _save_gan(G, D, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    inner = G.inner if isinstance(G, ClassAgnosticGenerator) else G
    torch.save(
        {
            "g_state": inner.state_dict(),
            "d_state": D.state_dict(),
            "latent_dim": inner.latent_dim,
            "num_classes": inner.num_classes,
            "image_shape": inner.image_shape,
            "g_manifest": inner.manifest,
            "d_manifest": D.manifest,
            "class_agnostic": isinstance(G, ClassAgnosticGenerator),
        },
        path,
    )


def _load_gan(path: Path):
    blob = torch.load(path, weights_only=False)
    G = Generator(blob["latent_dim"], blob["num_classes"], blob["image_shape"])
    G.load_state_dict(blob["g_state"])
    G.manifest = blob["g_manifest"]
    D = Discriminator(blob["num_classes"], in_ch=blob["image_shape"][0])
    D.load_state_dict(blob["d_state"])
    D.manifest = blob["d_manifest"]
    G.eval()
    D.eval()
    if blob.get("class_agnostic"):
        G = ClassAgnosticGenerator(G)
    return G, D


def _save_surrogate(model: SurrogateModel, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state": model.net.state_dict(),
            "architecture_id": model.architecture_id,
            "num_classes": model.num_classes,
            "provenance": model.provenance.value,
            "manifest": model.manifest,
        },
        path,
    )


def _load_surrogate(path: Path, image_shape) -> SurrogateModel:
    blob = torch.load(path, weights_only=False)
    net = build_classifier(blob["architecture_id"], blob["num_classes"], image_shape)
    net.load_state_dict(blob["state"])
    return SurrogateModel(
        net=net,
        architecture_id=blob["architecture_id"],
        num_classes=blob["num_classes"],
        provenance=Provenance(blob["provenance"]),
        manifest=blob["manifest"],
    )


def _deploy(paths: Paths):
    target = _load_target(require_artifact(paths.target, "target checkpoint"))
    ledger = QueryLedger.from_json(paths.ledger) if paths.ledger.exists() else QueryLedger()
    return deploy_target(target, ledger)


# ---------------------------------------------------------------------------
# stages

def stage_prepare_data(cfg: ExperimentConfig, overwrite: bool) -> dict:
    from .datasets import load_and_split

    paths = Paths(cfg.output_dir)
    if paths.data_manifest.exists():
        check_digest(read_manifest(paths.data_manifest), cfg.digest(), "data artifact", overwrite)
    split = load_and_split(cfg.dataset_id, cfg.split_policy())
    save_split(split, paths.split)
    write_manifest(
        paths.data_manifest,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        split_digest=split.manifest["digest"],
        num_private=len(split.private_labels),
        num_public=len(split.public_images),
        num_classes=split.num_private_classes,
    )
    return {"split": str(paths.split)}


def stage_train_target(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.data_manifest, "prepared data (run prepare-data)")
    check_digest(read_manifest(paths.data_manifest), cfg.digest(), "data artifact", overwrite)
    if paths.target_manifest.exists():
        check_digest(read_manifest(paths.target_manifest), cfg.digest(), "target artifact", overwrite)
    split = load_split(paths.split)
    target = train_target(split, cfg.raw["target"]["architecture"], cfg.target_train())
    _save_target(target, paths.target)
    QueryLedger().to_json(paths.ledger)  # deployment starts with an empty ledger
    write_manifest(paths.target_manifest, config_digest=cfg.digest(), seed=cfg.seed, **target.manifest)
    return {"target": str(paths.target), "val_accuracy": target.manifest["val_accuracy"]}


def stage_train_tacgan(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.target, "target checkpoint (run train-target)")
    if paths.gan_manifest.exists():
        check_digest(read_manifest(paths.gan_manifest), cfg.digest(), "tacgan artifact", overwrite)
    split = load_split(paths.split)
    dep = _deploy(paths)
    G, D, trace = train_tacgan(split, dep.oracle, cfg.tacgan_train())
    _save_gan(G, D, paths.gan)
    trace.to_csv(paths.gamma_csv)
    plots.save_gamma_curve(trace.values, paths.gan.parent / "gamma.png")
    plots.save_loss_curves(trace.d_loss, trace.g_loss, paths.gan.parent / "losses.png")
    dep.oracle.save_ledger(paths.ledger)
    write_manifest(
        paths.gan_manifest,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        iterations=cfg.tacgan_train().iterations,
        final_gamma=float(trace.values[-1]),
    )
    return {"gan": str(paths.gan), "final_gamma": float(trace.values[-1])}


def stage_train_surrogate(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.gan, "trained T-ACGAN (run train-tacgan)")
    if paths.surrogate_manifest.exists():
        check_digest(read_manifest(paths.surrogate_manifest), cfg.digest(), "surrogate artifact", overwrite)
    dep = _deploy(paths)
    G, _ = _load_gan(paths.gan)
    scfg = cfg.raw["surrogate"]

    fake = generate_fake_dataset(G, dep.oracle, per_class=scfg["per_class"], seed=cfg.seed + 7)
    save_pseudo_dataset(fake, paths.fake_ds)
    dep.oracle.save_ledger(paths.ledger)

    trained = {}
    snapshot_epochs = tuple(scfg["checkpoint_epochs"])
    for arch in scfg["architectures"]:
        ckpts = snapshot_epochs if arch == scfg["primary"] else ()
        model = train_surrogate(fake, arch, cfg.surrogate_train(), checkpoint_epochs=ckpts)
        _save_surrogate(model, paths.surrogate_model(arch))
        for ep, snap in model.checkpoints.items():
            _save_surrogate(snap, paths.surrogate_checkpoint(arch, ep))
        trained[arch] = model.manifest["train_accuracy"]
    write_manifest(
        paths.surrogate_manifest,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        architectures=scfg["architectures"],
        primary=scfg["primary"],
        pseudo_train_accuracy=trained,
        fake_histogram=fake.class_histogram.tolist(),
    )
    return {"architectures": trained}


def stage_run_baseline(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.target, "target checkpoint (run train-target)")
    if paths.baseline_manifest.exists():
        check_digest(read_manifest(paths.baseline_manifest), cfg.digest(), "baseline artifact", overwrite)
    split = load_split(paths.split)
    dep = _deploy(paths)

    pseudo = build_pseudo_labeled_public(split.public_images, dep.oracle)
    save_pseudo_dataset(pseudo, paths.baseline_dir / "pseudo_public")

    summary = {}
    for kind in cfg.enabled_baselines():
        spec = BaselineSpec(
            kind=kind,
            classifier=cfg.baseline_classifier(),
            gan=cfg.baseline_gan("acgan") if kind in (BaselineKind.ACGAN_I, BaselineKind.ACGAN_II) else None,
            augmentation=cfg.augmentation_policy()
            if kind in (BaselineKind.DIRECT_II, BaselineKind.ACGAN_II)
            else None,
            balance_target=cfg.raw["baselines"]["balance_target"],
        )
        result = run_baseline(spec, split, dep.oracle, pseudo_public=pseudo)
        _save_surrogate(result.surrogate, paths.baseline_model(kind.value))
        if result.generator is not None:
            _save_gan(result.generator, result.discriminator, paths.baseline_gan(kind.value))
        if result.coverage is not None:
            write_manifest(
                paths.baseline_dir / kind.value / "coverage.json",
                before=result.coverage.before.tolist(),
                after=result.coverage.after.tolist(),
                empty_classes=list(result.coverage.empty_classes),
            )
        summary[kind.value] = result.surrogate.manifest.get("train_accuracy")

    # oracle-free unconditional GAN on raw public images: the latent prior
    # for attacking the direct baselines' surrogates
    zeros = torch.zeros(len(split.public_images), dtype=torch.long)
    Gp, Dp, _ = train_acgan(split.public_images, zeros, 1, cfg.baseline_gan("public"))
    _save_gan(ClassAgnosticGenerator(Gp), Dp, paths.baseline_gan("public"))

    dep.oracle.save_ledger(paths.ledger)
    write_manifest(
        paths.baseline_manifest,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        kinds=[k.value for k in cfg.enabled_baselines()],
        pseudo_histogram=pseudo.class_histogram.tolist(),
        train_accuracy=summary,
    )
    return {"baselines": summary}


def _attack_classes(cfg: ExperimentConfig, num_classes: int) -> list[int]:
    wanted = cfg.raw["attack"]["target_classes"]
    return list(range(num_classes)) if wanted is None else [int(c) for c in wanted]


def _save_recons(path: Path, recons: dict[int, ReconstructionSet]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    classes = sorted(recons)
    np.savez_compressed(
        path,
        classes=np.asarray(classes),
        images=np.stack([recons[c].images.numpy() for c in classes]),
        latents=np.stack([recons[c].latents.numpy() for c in classes]),
        likelihoods=np.stack([recons[c].likelihoods for c in classes]),
        trajectories=np.stack([recons[c].trajectories for c in classes]),
    )


def _load_recons(path: Path) -> dict[int, ReconstructionSet]:
    data = np.load(path)
    out = {}
    for i, c in enumerate(data["classes"]):
        out[int(c)] = ReconstructionSet(
            target_class=int(c),
            latents=torch.from_numpy(data["latents"][i]),
            images=torch.from_numpy(data["images"][i]),
            likelihoods=data["likelihoods"][i],
            trajectories=data["trajectories"][i],
        )
    return out


def stage_attack(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.gan, "trained T-ACGAN (run train-tacgan)")
    scfg = cfg.raw["surrogate"]
    require_artifact(
        paths.surrogate_model(scfg["primary"]),
        f"surrogate checkpoint s_{scfg['primary']}.pt (run train-surrogate)",
    )
    if paths.attack_manifest.exists():
        check_digest(read_manifest(paths.attack_manifest), cfg.digest(), "attack artifact", overwrite)

    split = load_split(paths.split)
    image_shape = split.image_shape
    G, D = _load_gan(paths.gan)
    cd = extract_cd(D)
    members = [_load_surrogate(paths.surrogate_model(a), image_shape) for a in scfg["architectures"]]
    primary = members[scfg["architectures"].index(scfg["primary"])]
    scorers = {"cd": cd, "s": primary, "ensemble": build_ensemble(members)}

    acfg = cfg.raw["attack"]
    classes = _attack_classes(cfg, split.num_private_classes)
    ledger_before = None
    if paths.ledger.exists():
        ledger_before = QueryLedger.from_json(paths.ledger).snapshot()

    rows = {}
    for design, scorer in scorers.items():
        for seed in acfg["seeds"]:
            icfg = InversionConfig(
                style=InversionStyle.CONDITIONAL_ASCENT,
                steps=acfg["conditional"]["steps"],
                step_size=acfg["conditional"]["step_size"],
                candidates_per_class=acfg["candidates_per_class"],
                seed=seed,
            )
            recons = {y: invert_conditional(G, scorer, y, icfg) for y in classes}
            _save_recons(paths.attack_file(design, seed), recons)
            plots.save_image_grid(
                np.concatenate([recons[y].images.numpy() for y in classes]),
                paths.attack_dir / design / f"seed{seed}_grid.png",
                ncol=acfg["candidates_per_class"],
            )
        rows[design] = "conditional_ascent"

    prior_rows = {}
    if paths.baseline_manifest.exists():
        manifest = read_manifest(paths.baseline_manifest)
        prior_rows["tacgan_cd"] = (G, D, cd)
        for kind in manifest["kinds"]:
            s = _load_surrogate(paths.baseline_model(kind), image_shape)
            if kind.startswith("acgan"):
                Gb, Db = _load_gan(paths.baseline_gan(kind))
            else:
                Gb, Db = _load_gan(paths.baseline_gan("public"))
            prior_rows[kind] = (Gb, Db, s)

    for row, (Gr, Dr, scorer) in prior_rows.items():
        for seed in acfg["seeds"]:
            icfg = InversionConfig(
                style=InversionStyle.PRIOR_REGULARIZED,
                steps=acfg["prior"]["steps"],
                step_size=acfg["prior"]["step_size"],
                prior_weight=acfg["prior"]["prior_weight"],
                momentum=acfg["prior"]["momentum"],
                candidates_per_class=acfg["candidates_per_class"],
                seed=seed,
            )
            recons = {y: invert_prior_regularized(Gr, Dr, scorer, y, icfg) for y in classes}
            _save_recons(paths.attack_file(row, seed), recons)
        rows[row] = "prior_regularized"

    if ledger_before is not None:
        ledger_after = QueryLedger.from_json(paths.ledger).snapshot()
        if ledger_after != ledger_before:
            raise RuntimeError("attack stage must not consume oracle queries")

    write_manifest(
        paths.attack_manifest,
        config_digest=cfg.digest(),
        seed=cfg.seed,
        rows=rows,
        seeds=acfg["seeds"],
        classes=classes,
    )
    return {"rows": list(rows)}


def stage_evaluate(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.attack_manifest, "attack artifacts (run attack)")
    attack_manifest = read_manifest(paths.attack_manifest)
    check_digest(attack_manifest, cfg.digest(), "attack artifact", overwrite)
    split = load_split(paths.split)

    target_arch = read_manifest(paths.target_manifest)["architecture_id"]
    ecfg = cfg.raw["evaluation"]
    eval_model = train_eval_model(
        split,
        ecfg["architecture"],
        ClassifierTrainConfig(epochs=ecfg["epochs"], lr=ecfg["lr"], seed=cfg.seed + 8),
        target_architecture_id=target_arch,
    )
    paths.eval_model.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state": eval_model.net.state_dict(),
            "architecture_id": eval_model.architecture_id,
            "num_classes": eval_model.num_classes,
            "manifest": eval_model.manifest,
        },
        paths.eval_model,
    )

    acfg = cfg.raw["attack"]
    top = acfg["select_top"]
    results = {}
    for row in attack_manifest["rows"]:
        per_seed = []
        for seed in attack_manifest["seeds"]:
            recons = _load_recons(paths.attack_file(row, seed))
            selected = {y: select_final(r, top).images for y, r in recons.items()}
            everything = {y: r.images for y, r in recons.items()}
            acc = evaluate_attack(selected, split, eval_model).accuracy_mean
            knn = evaluate_attack(everything, split, eval_model).knn_mean
            per_seed.append({"seed": seed, "accuracy": acc, "knn": knn})
        accs = np.array([r["accuracy"] for r in per_seed])
        knns = np.array([r["knn"] for r in per_seed])
        results[row] = {
            "attack": attack_manifest["rows"][row],
            "per_seed": per_seed,
            "accuracy_mean": float(accs.mean()),
            "accuracy_std": float(accs.std(ddof=1)) if len(accs) > 1 else 0.0,
            "knn_mean": float(knns.mean()),
        }

    payload = {
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "eval_architecture": eval_model.architecture_id,
        "eval_val_accuracy": eval_model.manifest["val_accuracy"],
        "results": results,
    }
    paths.metrics.write_text(json.dumps(payload, indent=2))
    write_manifest(paths.eval_manifest, config_digest=cfg.digest(), seed=cfg.seed)
    return {"results": {k: v["accuracy_mean"] for k, v in results.items()}}


def stage_analyze(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.gan, "trained T-ACGAN (run train-tacgan)")
    require_artifact(paths.eval_model, "evaluation model (run evaluate)")
    if paths.analysis_manifest.exists():
        check_digest(read_manifest(paths.analysis_manifest), cfg.digest(), "analysis artifact", overwrite)
    split = load_split(paths.split)
    sfg = cfg.raw["surrogate"]
    ancfg = cfg.raw["analysis"]
    out = paths.analysis_dir
    out.mkdir(parents=True, exist_ok=True)

    target = _load_target(paths.target)
    probe = deploy_target(target).probe(ExperimenterToken())
    G, _ = _load_gan(paths.gan)
    primary = _load_surrogate(paths.surrogate_model(sfg["primary"]), split.image_shape)

    # likelihood study on freshly generated samples, pseudo-labeled via the
    # probe's argmax (identical labels to the oracle's, but unledgered)
    n = ancfg["sample_count"]
    gen = torch.Generator().manual_seed(cfg.seed + 9)
    images, labels = [], []
    classes = split.num_private_classes
    for i in range(0, n, 500):
        take = min(500, n - i)
        y = torch.arange(take) % classes
        z = torch.randn(take, G.latent_dim, generator=gen)
        with torch.no_grad():
            x = G(z, y)
        images.append(x)
        labels.append(probe.hard_labels(x))
    images = torch.cat(images)
    labels = np.concatenate(labels)

    hist_hi = analysis_mod.conditional_pt_histogram(images, labels, primary, probe, ancfg["ps_threshold"])
    hist_lo = analysis_mod.conditional_pt_histogram(images, labels, primary, probe, 0.5)
    plots.save_conditional_histogram(hist_hi, out / "p1_histogram.png")
    with open(out / "p1_histogram.csv", "w") as f:
        f.write("bin_lo,bin_hi,count\n")
        for lo, hi, c in zip(hist_hi.bin_edges[:-1], hist_hi.bin_edges[1:], hist_hi.counts):
            f.write(f"{lo:.1f},{hi:.1f},{int(c)}\n")

    # learning-dynamics study on the surrogate's own training samples
    fake = load_pseudo_dataset(paths.fake_ds)
    per_class = ancfg["dynamics_per_class"]
    keep = []
    for c in range(classes):
        idx = np.flatnonzero(fake.labels.numpy() == c)[:per_class]
        if len(idx) >= 2:
            keep.extend(idx.tolist())
    keep = np.asarray(keep)
    track_images, track_labels = fake.images[keep], fake.labels.numpy()[keep]

    eval_blob = torch.load(paths.eval_model, weights_only=False)
    eval_net = build_classifier(eval_blob["architecture_id"], eval_blob["num_classes"], split.image_shape)
    eval_net.load_state_dict(eval_blob["state"])
    embedder = EvaluationModel(eval_net, eval_blob["architecture_id"], eval_blob["num_classes"])

    # embedder stands in for an external identity embedder at this scale
    embeddings = embedder.features(track_images)
    split_eh = analysis_mod.easy_hard_split(embeddings, track_labels, rho=ancfg["easy_fraction"])

    ckpt_epochs = sorted(sfg["checkpoint_epochs"])
    checkpoints = [
        (ep, _load_surrogate(paths.surrogate_checkpoint(sfg["primary"], ep), split.image_shape))
        for ep in ckpt_epochs
    ]
    records = analysis_mod.track_ps_dynamics(track_images, track_labels, checkpoints, probe)
    analysis_mod.records_to_csv(records, out / "dynamics.csv")
    plots.save_dynamics_scatter(records, split_eh.easy_mask, out / "dynamics.png")

    mid_epoch = ckpt_epochs[len(ckpt_epochs) // 2]
    mid = [r for r in records if r.epoch == mid_epoch]
    ps = np.array([r.p_s for r in mid])
    ids = np.array([r.sample_id for r in mid])
    easy = split_eh.easy_mask[ids]
    summary = {
        "p1": {
            "threshold": hist_hi.threshold,
            "n_conditioned": hist_hi.n_conditioned,
            "median_conditional_pt": hist_hi.median_conditional,
            "frac_below_0.1": hist_hi.frac_below_0p1,
            "unconditional_median_pt": hist_hi.unconditional_median,
            "median_conditional_pt_at_0.5": hist_lo.median_conditional,
            "note": hist_hi.note,
        },
        "dynamics": {
            "mid_epoch": mid_epoch,
            "easy_mean_ps_mid": float(ps[easy].mean()),
            "hard_mean_ps_mid": float(ps[~easy].mean()),
            "embedder": "evaluation-model penultimate features (desk-scale stand-in)",
        },
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    write_manifest(paths.analysis_manifest, config_digest=cfg.digest(), seed=cfg.seed)
    return summary


def stage_report(cfg: ExperimentConfig, overwrite: bool) -> dict:
    paths = Paths(cfg.output_dir)
    require_artifact(paths.metrics, "metrics (run evaluate)")
    metrics = json.loads(paths.metrics.read_text())
    manifests = [paths.data_manifest, paths.target_manifest, paths.gan_manifest,
                 paths.surrogate_manifest, paths.attack_manifest, paths.eval_manifest]
    digests = {read_manifest(m)["config_digest"] for m in manifests if m.exists()}
    if len(digests) > 1 and not overwrite:
        raise ConfigMismatchError(
            f"artifacts span multiple config digests {sorted(digests)}; pass --overwrite to mix"
        )

    ledger = QueryLedger.from_json(require_artifact(paths.ledger, "query ledger"))
    snap = ledger.snapshot()

    paths.report_dir.mkdir(parents=True, exist_ok=True)
    setup = f"{cfg.dataset_id}/{cfg.raw['data']['public_source']}"
    rows = []
    for row, res in metrics["results"].items():
        rows.append(
            {
                "setup": setup,
                "attack": res["attack"],
                "surrogate_design": row,
                "attack_acc_mean": round(100.0 * res["accuracy_mean"], 2),
                "attack_acc_std": round(100.0 * res["accuracy_std"], 2),
                "knn_mean": round(res["knn_mean"], 4),
                "queries_total": snap.total,
            }
        )
    with open(paths.report_dir / "results.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)

    queries = snap.to_dict()
    with open(paths.report_dir / "queries.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(queries.keys()))
        writer.writeheader()
        writer.writerow(queries)

    payload = {"config_digest": cfg.digest(), "rows": rows, "queries": queries}
    analysis_summary = paths.analysis_dir / "summary.json"
    if analysis_summary.exists():
        payload["analysis"] = json.loads(analysis_summary.read_text())
    (paths.report_dir / "results.json").write_text(json.dumps(payload, indent=2))
    return payload


_STAGE_FUNCS = {
    "prepare-data": stage_prepare_data,
    "train-target": stage_train_target,
    "train-tacgan": stage_train_tacgan,
    "train-surrogate": stage_train_surrogate,
    "run-baseline": stage_run_baseline,
    "attack": stage_attack,
    "evaluate": stage_evaluate,
    "analyze": stage_analyze,
    "report": stage_report,
}


def run_stage(stage: str, config_path, overwrite: bool = False, seed: int | None = None) -> dict:
    if stage not in _STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}; stages: {', '.join(STAGES)}")
    cfg = ExperimentConfig.from_yaml(config_path)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    with output_lock(cfg.output_dir):
        return _STAGE_FUNCS[stage](cfg, overwrite)
