"""Orchestration: source training, the online adaptation loop, sweeps,
memory tables, and replay.

Per target batch, in order: forward -> mixture update -> likelihoods and
entropies -> threshold calibration (first n_init batches) -> three-way
pseudo-labeling -> prediction -> scoring -> augmented view -> losses ->
backprop -> SGD step. Each batch is seen exactly once; the prediction for
a batch always precedes the parameter update it triggers.

One run is strictly sequential. Independent runs (sweep cells) share no
state and could execute in parallel; the sweep runner here keeps them
sequential for simplicity.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .config import RunConfig
from .errors import GmmAdaptError, NumericalFailure
from .gmm_stream import GaussianMixtureStream
from .metrics import MemoryModelInputs, RunRecord, memory_report, score_batch, summarize
from .objectives import contrastive_loss, kld_loss
from .ood_gate import ThresholdState, normalized_entropy_rows
from .simulator import SourceSet, TargetStream, make_task
from .toy_model import OptimizerConfig, ToyModel, accuracy, augment, train_source

ENV_OUTPUT_ROOT = "GMMADAPT_RUNS"

SWEEP_PARAMETERS = {
    "FD_r": "fd_r",
    "fd_r": "fd_r",
    "p_reject": "p_reject",
    "N_init": "n_init",
    "n_init": "n_init",
    "N_b": "n_b",
    "n_b": "n_b",
    "lambda": "lam",
    "lam": "lam",
    "temperature": "temperature",
    "lr": "lr",
}


def derive_seeds(seed: int) -> dict[str, int]:
    """Stable per-purpose sub-seeds from the run seed."""
    state = np.random.SeedSequence(seed).generate_state(4)
    return {
        "data": int(state[0]),
        "model": int(state[1]),
        "source_train": int(state[2]),
        "augment": int(state[3]),
    }


def build_task(cfg: RunConfig) -> tuple[SourceSet, TargetStream]:
    seeds = derive_seeds(cfg.seed)
    return make_task(
        cfg.shift,
        cfg.domain,
        seed=seeds["data"],
        n_source_train=cfg.n_source_train,
        n_source_holdout=cfg.n_source_holdout,
        n_batches=cfg.n_batches,
        batch_size=cfg.n_b,
    )


def train_source_model(cfg: RunConfig, source: SourceSet) -> tuple[ToyModel, float, list[float]]:
    seeds = derive_seeds(cfg.seed)
    model = ToyModel(cfg.domain.d_in, cfg.fd, cfg.fd_r, cfg.shift.n_source_classes,
                     seed=seeds["model"])
    history = train_source(
        model,
        source.x_train,
        source.y_train,
        epochs=cfg.source_epochs,
        cfg=OptimizerConfig(cfg.source_lr, cfg.momentum),
        batch_size=cfg.n_b,
        seed=seeds["source_train"],
    )
    holdout_acc = accuracy(model, source.x_holdout, source.y_holdout)
    return model, holdout_acc, history


@dataclass
class AdaptResult:
    records: list[RunRecord]
    model: ToyModel
    gmm: GaussianMixtureStream
    thresholds: ThresholdState

    def summary(self, cfg: RunConfig) -> dict:
        return summarize(self.records, cfg.shift.kind, cfg.n_init)


def adapt_stream(cfg: RunConfig, model: ToyModel, stream: TargetStream) -> AdaptResult:
    """Run the online loop over one target stream, mutating the model."""
    n_classes = cfg.shift.n_source_classes
    gmm = GaussianMixtureStream(n_classes, cfg.fd_r, cfg.jitter)
    thresholds = ThresholdState(n_init=cfg.n_init, p_reject=cfg.p_reject)
    optimizer = OptimizerConfig(cfg.lr, cfg.momentum)
    aug_rng = np.random.default_rng(np.random.SeedSequence(derive_seeds(cfg.seed)["augment"]))
    use_contrastive = cfg.loss_mode in ("both", "contrastive_only")
    use_kld = cfg.loss_mode in ("both", "kld_only")

    records: list[RunRecord] = []
    for batch in stream:
        try:
            cache = model.forward(batch.inputs)
            gmm.update(cache.reduced, cache.probs)
            likelihoods = gmm.likelihood_vectors(cache.reduced)
            entropies = normalized_entropy_rows(likelihoods)
            if not thresholds.frozen:
                thresholds.calibrate(entropies)
            pseudo = thresholds.pseudo_label_batch(likelihoods, entropies)
            preds = thresholds.predict_batch(cache.probs, likelihoods, entropies)
            counts, rates = score_batch(batch.true_labels, preds, pseudo, n_classes)

            loss_c = loss_k = 0.0
            if use_contrastive or use_kld:
                grads = None
                d_logits = None
                if use_kld:
                    loss_k, d_logits_raw = kld_loss(cache.probs, pseudo, n_classes)
                    d_logits = cfg.lam * d_logits_raw
                if use_contrastive:
                    x_aug = augment(batch.inputs, aug_rng, cfg.augment_sigma)
                    cache_aug = model.forward(x_aug)
                    feats = np.vstack([cache.reduced, cache_aug.reduced])
                    labels = np.concatenate([pseudo, pseudo])
                    protos = np.zeros((n_classes, cfg.fd_r))
                    idx, means = gmm.prototypes()
                    protos[idx] = means
                    loss_c, d_feats = contrastive_loss(
                        feats, labels, protos, n_classes, cfg.temperature,
                        cfg.unknown_positive_pairs,
                    )
                    n = batch.inputs.shape[0]
                    grads = model.backward(cache, d_reduced=d_feats[:n], d_logits=d_logits)
                    _add_grads(grads, model.backward(cache_aug, d_reduced=d_feats[n:]))
                else:
                    grads = model.backward(cache, d_logits=d_logits)
                model.sgd_step(grads, optimizer)
        except GmmAdaptError as err:
            raise NumericalFailure(batch.batch_index, err) from err

        records.append(
            RunRecord(
                batch=batch.batch_index,
                tau_k=thresholds.tau_k,
                tau_u=thresholds.tau_u,
                loss_c=loss_c,
                loss_kld=loss_k,
                counts=counts,
                **rates,
            )
        )
    return AdaptResult(records, model, gmm, thresholds)


def _add_grads(into: dict[str, np.ndarray], other: dict[str, np.ndarray]) -> None:
    for k, v in other.items():
        into[k] += v


def resolve_output_dir(explicit: str | None, default_name: str) -> Path:
    if explicit is not None:
        return Path(explicit)
    root = Path(os.environ.get(ENV_OUTPUT_ROOT, "runs"))
    return root / default_name


def run_adapt(cfg: RunConfig, out_dir: Path, model_path: str | None = None) -> dict:
    """Full adaptation run: artifacts land in out_dir, summary returned.

    Layout: config.resolved.json, metrics.jsonl, metrics.csv,
    thresholds.csv, model.ckpt, gmm.ckpt, summary.json.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    source, stream = build_task(cfg)
    if model_path is not None:
        model = ToyModel.load(model_path)
        source_holdout_acc = accuracy(model, source.x_holdout, source.y_holdout)
    else:
        model, source_holdout_acc, _ = train_source_model(cfg, source)

    result = adapt_stream(cfg, model, stream)
    summary = result.summary(cfg)

    resolved = cfg.resolved_dict()
    resolved["derived"]["source_holdout_accuracy"] = source_holdout_acc
    resolved["derived"]["tau_k"] = result.thresholds.tau_k
    resolved["derived"]["tau_u"] = result.thresholds.tau_u
    resolved["derived"]["tau"] = result.thresholds.tau
    resolved["derived"]["thresholds_frozen"] = result.thresholds.frozen
    (out_dir / "config.resolved.json").write_text(json.dumps(resolved, indent=2) + "\n")

    metrics.write_jsonl(result.records, out_dir / "metrics.jsonl")
    metrics.write_csv(result.records, out_dir / "metrics.csv")
    with open(out_dir / "thresholds.csv", "w") as fh:
        fh.write("batch,tau_k,tau_u\n")
        for r in result.records:
            fh.write(f"{r.batch},{r.tau_k!r},{r.tau_u!r}\n")
    result.model.save(out_dir / "model.ckpt")
    (out_dir / "gmm.ckpt").write_text(result.gmm.to_snapshot())
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def replay(run_dir: Path) -> dict:
    """Re-score a stored run from its metric log, without re-adaptation.

    A pure function of config.resolved.json and metrics.jsonl; it must
    reproduce the stored summary.json exactly.
    """
    run_dir = Path(run_dir)
    resolved = json.loads((run_dir / "config.resolved.json").read_text())
    records = metrics.read_jsonl(run_dir / "metrics.jsonl")
    return summarize(records, resolved["shift"]["kind"], resolved["n_init"])


def run_sweep(
    base: RunConfig,
    parameter: str,
    values: list,
    repeats: int,
    out_dir: Path,
    compensate_n_init: bool = False,
) -> list[dict]:
    """Cross product of values x repeats, one row of aggregated means per value.

    Repeats use seeds base.seed + r so the same seeds pair up across
    values. When sweeping the batch size, the compensation mode rescales
    n_init to hold n_init * n_b (samples used for initialization) constant.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise GmmAdaptError(
            f"unknown sweep parameter {parameter!r}; choose from "
            f"{sorted(set(SWEEP_PARAMETERS))}"
        )
    if repeats < 1:
        raise GmmAdaptError("repeats must be at least 1")
    field_name = SWEEP_PARAMETERS[parameter]
    if compensate_n_init and field_name != "n_b":
        raise GmmAdaptError("n_init compensation only applies to batch-size sweeps")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        results = []
        for rep in range(repeats):
            doc = base.to_dict()
            doc[_config_key(field_name)] = value
            doc["seed"] = base.seed + rep
            if compensate_n_init:
                doc["n_init"] = max(1, int(np.floor(base.n_init * base.n_b / value + 0.5)))
            cfg = RunConfig.from_dict(doc)
            run_name = f"{field_name}={value}_rep{rep}"
            summary = run_adapt(cfg, out_dir / run_name)
            results.append(summary["full_run"]["primary_metric"])
        rows.append(
            {
                "parameter": field_name,
                "value": value,
                "n_runs": repeats,
                "mean_primary_metric": float(np.mean(results)),
                "std_primary_metric": float(np.std(results)),
            }
        )
    header = "parameter,value,n_runs,mean_primary_metric,std_primary_metric"
    lines = [header] + [
        f"{r['parameter']},{r['value']},{r['n_runs']},"
        f"{r['mean_primary_metric']!r},{r['std_primary_metric']!r}"
        for r in rows
    ]
    (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
    return rows


def _config_key(field_name: str) -> str:
    return "lambda" if field_name == "lam" else field_name


def run_memory(inputs: MemoryModelInputs, class_lo: int, class_hi: int) -> list[dict]:
    """Memory-model table rows for every class count in [class_lo, class_hi]."""
    if class_lo < 1 or class_hi < class_lo:
        raise GmmAdaptError("class range must satisfy 1 <= lo <= hi")
    rows = []
    for n in range(class_lo, class_hi + 1):
        rep = memory_report(
            MemoryModelInputs(inputs.fd, inputs.fd_r, n, inputs.queue_len, inputs.teacher_params)
        )
        rows.append(
            {
                "n_classes": n,
                "n_gmm": rep.n_gmm,
                "n_queue": rep.n_queue,
                "n_teacher": rep.n_teacher,
                "ratio_queue": rep.ratio_queue,
                "ratio_teacher": rep.ratio_teacher,
            }
        )
    return rows


def memory_rows_to_csv(rows: list[dict], path: Path | None) -> str:
    header = "n_classes,n_gmm,n_queue,n_teacher,ratio_queue,ratio_teacher"
    lines = [header] + [
        f"{r['n_classes']},{r['n_gmm']},{r['n_queue']},{r['n_teacher']},"
        f"{r['ratio_queue']!r},{r['ratio_teacher']!r}"
        for r in rows
    ]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
