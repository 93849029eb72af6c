"""Config-driven experiment runner.

A YAML config names the datasets (synthetic recipes or CSV paths), how
each splits into autoencoder/classifier/test partitions, which clients
hold them, the scaler mode, the fusion strategy, and the round plan.
``run_experiment`` executes the whole pipeline deterministically and
writes every artifact needed to re-derive the reported numbers:
resolved config echo, scaler dump(s), round log, loss curve, reports,
and model checkpoints. Timestamps live only in meta.json so repeated
runs are byte-identical.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .data import (
    FlowDataset,
    SplitSpec,
    Splits,
    SynthSpec,
    load_flow_csv,
    split,
    synth_generate,
)
from .errors import ConfigError, FedIDSError
from .federation import (
    ClientNode,
    FederationPlan,
    FederationServer,
    NetConfig,
    RoundLog,
    predict,
    train_central,
)
from .fusion import FedAvgMultiEpoch, FedMMB, FedSam, FusionStrategy
from .messages import InProcessTransport, audit_payload_kinds
from .metrics import (
    ClassReport,
    class_report,
    confusion,
    emit_loss_curve,
    render_report,
    threshold_baseline,
)
from .nn import DenseNet, OptimizerConfig, reconstruction_error, save_checkpoint
from .scaling import (
    MinMaxScaler,
    client_update,
    count_retained_bounds,
    init_scaler,
    save_scaler,
    scale,
)
from .seeding import child_rng

log = logging.getLogger(__name__)

CONFIG_VERSION = 1


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    synth: SynthSpec | None = None
    csv: str | None = None
    split: SplitSpec = field(default_factory=SplitSpec)


@dataclass(frozen=True)
class ClientConfig:
    name: str
    dataset: str
    labeled: bool = True


@dataclass(frozen=True)
class ScalerConfig:
    mode: str = "sentinel"  # sentinel | random
    per_client: bool = False
    low: float = -1.0
    high: float = 1.0


@dataclass(frozen=True)
class ModelConfig:
    ae_layers: tuple[int, ...] = (75, 48, 16, 48, 75)
    clf_layers: tuple[int, ...] = (75, 32, 16, 2)
    hidden_activation: str = "relu"
    ae_optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(kind="rmsprop")
    )
    clf_optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(kind="adam")
    )

    def ae_config(self) -> NetConfig:
        return NetConfig(
            self.ae_layers, self.hidden_activation, "linear", self.ae_optimizer
        )

    def clf_config(self) -> NetConfig:
        return NetConfig(
            self.clf_layers, self.hidden_activation, "softmax", self.clf_optimizer
        )


@dataclass
class ExperimentConfig:
    name: str
    mode: str  # central | federated
    seed: int
    datasets: dict[str, DatasetConfig]
    clients: list[ClientConfig]
    test_sources: list[str]
    scaler: ScalerConfig = field(default_factory=ScalerConfig)
    strategy: FusionStrategy = field(default_factory=lambda: FedAvgMultiEpoch())
    ae_rounds: int = 100
    clf_rounds: int = 100
    eval_every: int = 10
    checkpoint_every: int = 0
    persist_optimizer: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    output_dir: str = "runs"
    allow_single_client: bool = False
    report_threshold_baseline: bool = False
    raw: dict = field(default_factory=dict, repr=False)


def _parse_strategy(d: dict, violations: list[str]) -> FusionStrategy:
    kind = d.get("kind", "fedavg")
    batch_size = int(d.get("batch_size", 32))
    try:
        if kind == "fedavg":
            return FedAvgMultiEpoch(int(d.get("epochs", 1)), batch_size)
        if kind == "fedmmb":
            if "batch_count" not in d:
                violations.append("strategy: fedmmb requires batch_count")
                return FedAvgMultiEpoch()
            return FedMMB(int(d["batch_count"]), batch_size)
        if kind == "fedsam":
            if "sample_size" not in d:
                violations.append("strategy: fedsam requires sample_size")
                return FedAvgMultiEpoch()
            return FedSam(int(d["sample_size"]), batch_size)
    except (ConfigError, ValueError) as exc:
        violations.append(f"strategy: {exc}")
        return FedAvgMultiEpoch()
    violations.append(f"strategy: unknown kind {kind!r}")
    return FedAvgMultiEpoch()


def _parse_optimizer(d: dict, default_kind: str, violations: list[str], where: str):
    try:
        return OptimizerConfig(
            kind=d.get("kind", default_kind),
            learning_rate=float(d.get("learning_rate", 1e-3)),
            decay=float(d.get("decay", 0.9)),
            beta1=float(d.get("beta1", 0.9)),
            beta2=float(d.get("beta2", 0.999)),
            epsilon=float(d.get("epsilon", 1e-8)),
        )
    except (ConfigError, ValueError) as exc:
        violations.append(f"{where}: {exc}")
        return OptimizerConfig(kind=default_kind)


def _parse_split(d: dict, default_seed: int, violations: list[str], where: str) -> SplitSpec:
    try:
        return SplitSpec(
            ae_train_benign=int(d.get("ae_train_benign", 0)),
            clf_train_benign=int(d.get("clf_train_benign", 0)),
            clf_train_attack=int(d.get("clf_train_attack", 0)),
            test_benign=int(d.get("test_benign", 0)),
            test_attack=int(d.get("test_attack", 0)),
            seed=int(d.get("seed", default_seed)),
        )
    except (ConfigError, ValueError) as exc:
        violations.append(f"{where}: {exc}")
        return SplitSpec()


def _parse_synth(name: str, d: dict, violations: list[str]) -> SynthSpec | None:
    try:
        return SynthSpec(
            name=name,
            n_benign=int(d.get("n_benign", 0)),
            n_attack=int(d.get("n_attack", 0)),
            center=d.get("center", 0.0),
            scale=d.get("scale", 1.0),
            cov=d.get("cov"),
            n_clusters=int(d.get("n_clusters", 1)),
            cluster_spread=float(d.get("cluster_spread", 0.0)),
            attack_offset=d.get("attack_offset", 0.0),
            attack_scale=float(d.get("attack_scale", 1.0)),
            labeled=bool(d.get("labeled", True)),
            n_features=int(d.get("n_features", 75)),
        )
    except (ConfigError, ValueError) as exc:
        violations.append(f"datasets.{name}.synth: {exc}")
        return None


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Build a typed config, raising ConfigError that lists every violation."""
    violations: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    version = doc.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        violations.append(f"unsupported config version {version}")

    name = str(doc.get("name", "")).strip()
    if not name:
        violations.append("name is required")
    mode = doc.get("mode", "federated")
    if mode not in ("central", "federated"):
        violations.append(f"mode must be central or federated, got {mode!r}")
    try:
        seed = int(doc.get("seed", 0))
        if seed < 0:
            violations.append("seed must be non-negative")
            seed = 0
    except (TypeError, ValueError):
        violations.append("seed must be an integer")
        seed = 0

    datasets: dict[str, DatasetConfig] = {}
    raw_datasets = doc.get("datasets", {})
    if not isinstance(raw_datasets, dict) or not raw_datasets:
        violations.append("datasets section is required")
        raw_datasets = {}
    for ds_name, entry in raw_datasets.items():
        entry = entry or {}
        synth = entry.get("synth")
        csv_path = entry.get("csv")
        if (synth is None) == (csv_path is None):
            violations.append(
                f"datasets.{ds_name}: exactly one of synth or csv is required"
            )
            continue
        default_split_seed = int(
            child_rng(seed, "split", str(ds_name)).integers(0, 2**31)
        )
        split_spec = _parse_split(
            entry.get("split", {}), default_split_seed, violations,
            f"datasets.{ds_name}.split",
        )
        synth_spec = (
            _parse_synth(str(ds_name), synth, violations) if synth is not None else None
        )
        if synth_spec is not None:
            need_b = (
                split_spec.ae_train_benign + split_spec.clf_train_benign
                + split_spec.test_benign
            )
            need_a = split_spec.clf_train_attack + split_spec.test_attack
            if need_b > synth_spec.n_benign:
                violations.append(
                    f"datasets.{ds_name}: split needs {need_b} benign rows but synth "
                    f"generates {synth_spec.n_benign}"
                )
            if need_a > synth_spec.n_attack:
                violations.append(
                    f"datasets.{ds_name}: split needs {need_a} attack rows but synth "
                    f"generates {synth_spec.n_attack}"
                )
        datasets[str(ds_name)] = DatasetConfig(
            str(ds_name), synth_spec, csv_path, split_spec
        )

    clients: list[ClientConfig] = []
    raw_clients = doc.get("clients", [])
    if not isinstance(raw_clients, list) or not raw_clients:
        violations.append("clients section is required")
        raw_clients = []
    seen_names = set()
    for i, entry in enumerate(raw_clients):
        entry = entry or {}
        cname = str(entry.get("name", "")).strip()
        if not cname:
            violations.append(f"clients[{i}]: name is required")
            continue
        if cname in seen_names:
            violations.append(f"clients[{i}]: duplicate client name {cname!r}")
            continue
        seen_names.add(cname)
        ds = entry.get("dataset")
        if ds not in datasets:
            violations.append(f"clients[{i}]: unknown dataset {ds!r}")
            continue
        clients.append(ClientConfig(cname, str(ds), bool(entry.get("labeled", True))))

    test_sources = doc.get("test_sources", [])
    if not isinstance(test_sources, list) or not test_sources:
        violations.append("test_sources must list at least one dataset")
        test_sources = []
    for ds in test_sources:
        if ds not in datasets:
            violations.append(f"test_sources: unknown dataset {ds!r}")
    test_rows = sum(
        datasets[ds].split.test_benign + datasets[ds].split.test_attack
        for ds in test_sources
        if ds in datasets
    )
    if test_sources and test_rows == 0:
        violations.append("test_sources provide zero test rows")

    raw_scaler = doc.get("scaler", {}) or {}
    scaler_cfg = ScalerConfig(
        mode=raw_scaler.get("mode", "sentinel"),
        per_client=bool(raw_scaler.get("per_client", False)),
        low=float(raw_scaler.get("low", -1.0)),
        high=float(raw_scaler.get("high", 1.0)),
    )
    if scaler_cfg.mode not in ("sentinel", "random"):
        violations.append(f"scaler.mode must be sentinel or random, got {scaler_cfg.mode!r}")
    if scaler_cfg.mode == "random" and not scaler_cfg.low < scaler_cfg.high:
        violations.append("scaler: low must be < high for random init")

    strategy = _parse_strategy(doc.get("strategy", {}) or {}, violations)

    raw_plan = doc.get("plan", {}) or {}
    ae_rounds = int(raw_plan.get("ae_rounds", 100))
    clf_rounds = int(raw_plan.get("clf_rounds", 100))
    eval_every = int(raw_plan.get("eval_every", 10))
    checkpoint_every = int(raw_plan.get("checkpoint_every", 0))
    persist_optimizer = bool(raw_plan.get("persist_optimizer", False))
    if ae_rounds < 1 or clf_rounds < 1:
        violations.append("plan: round counts must be >= 1")
    if eval_every < 1:
        violations.append("plan: eval_every must be >= 1")

    raw_model = doc.get("model", {}) or {}
    model = ModelConfig(
        ae_layers=tuple(raw_model.get("ae_layers", (75, 48, 16, 48, 75))),
        clf_layers=tuple(raw_model.get("clf_layers", (75, 32, 16, 2))),
        hidden_activation=raw_model.get("hidden_activation", "relu"),
        ae_optimizer=_parse_optimizer(
            raw_model.get("ae_optimizer", {}) or {}, "rmsprop", violations,
            "model.ae_optimizer",
        ),
        clf_optimizer=_parse_optimizer(
            raw_model.get("clf_optimizer", {}) or {}, "adam", violations,
            "model.clf_optimizer",
        ),
    )

    config = ExperimentConfig(
        name=name or "experiment",
        mode=mode if mode in ("central", "federated") else "federated",
        seed=seed,
        datasets=datasets,
        clients=clients,
        test_sources=[str(s) for s in test_sources],
        scaler=scaler_cfg,
        strategy=strategy,
        ae_rounds=ae_rounds,
        clf_rounds=clf_rounds,
        eval_every=eval_every,
        checkpoint_every=checkpoint_every,
        persist_optimizer=persist_optimizer,
        model=model,
        output_dir=str(doc.get("output_dir", "runs")),
        allow_single_client=bool(doc.get("allow_single_client", False)),
        report_threshold_baseline=bool(doc.get("report_threshold_baseline", False)),
        raw=doc,
    )
    violations.extend(_semantic_violations(config))
    if violations:
        raise ConfigError("\n".join(violations))
    return config


def _semantic_violations(config: ExperimentConfig) -> list[str]:
    violations = []
    n_feats = set()
    for ds in config.datasets.values():
        if ds.synth is not None:
            n_feats.add(ds.synth.n_features)
    if len(n_feats) > 1:
        violations.append("synthetic datasets disagree on n_features")
    width = n_feats.pop() if n_feats else 75

    if config.model.ae_layers[0] != width or config.model.ae_layers[-1] != width:
        violations.append(
            f"model.ae_layers must start and end at the feature width {width}"
        )
    elif min(config.model.ae_layers[1:-1]) >= width:
        violations.append("model.ae_layers needs an undercomplete interior layer")
    if config.model.clf_layers[0] != width:
        violations.append(f"model.clf_layers must start at the feature width {width}")
    if config.model.clf_layers[-1] != 2:
        violations.append("model.clf_layers must end with 2 classes")

    unlabeled = [c.name for c in config.clients if not c.labeled]
    for c in config.clients:
        ds = config.datasets.get(c.dataset)
        if ds is None:
            continue
        if ds.synth is not None and not ds.synth.labeled and c.labeled:
            violations.append(
                f"client {c.name!r} is marked labeled but dataset {c.dataset!r} "
                "has no labels"
            )
    if config.mode == "central":
        if unlabeled:
            violations.append(
                f"central mode cannot use unlabeled clients: {unlabeled}"
            )
        if config.scaler.per_client:
            violations.append("central mode has no per-client scaler ablation")
    else:
        if len(config.clients) == 1 and not config.allow_single_client:
            violations.append(
                "federated mode needs >= 2 clients (or allow_single_client: true)"
            )
        if config.clients and all(not c.labeled for c in config.clients):
            violations.append("at least one client must be labeled")
    return violations


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError on problems."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if doc is None:
        raise ConfigError(f"empty config file: {path}")
    return config_from_dict(doc)


def validate_config(path) -> list[str]:
    """Return the list of violations; empty iff the config is runnable."""
    try:
        load_config(path)
    except ConfigError as exc:
        return str(exc).splitlines()
    return []


@dataclass
class ExperimentResult:
    out_dir: Path
    reports: dict[str, ClassReport]
    headline_f1: float
    round_logs: list
    meta: dict


def _materialize_datasets(config: ExperimentConfig) -> dict[str, Splits]:
    synth_specs = [
        ds.synth for ds in config.datasets.values() if ds.synth is not None
    ]
    generated = {
        d.name: d for d in synth_generate(synth_specs, config.seed)
    } if synth_specs else {}
    out: dict[str, Splits] = {}
    for name, ds in config.datasets.items():
        if ds.synth is not None:
            full = generated[name]
        else:
            full = load_flow_csv(ds.csv, name=name)
        out[name] = split(full, ds.split)
    return out


def _build_test_set(config: ExperimentConfig, splits: dict[str, Splits]) -> FlowDataset:
    parts = []
    for source in config.test_sources:
        part = splits[source].test
        if part is not None:
            parts.append(part)
    return FlowDataset.concat(parts, name="test")


def _evaluate(
    ae: DenseNet, clf: DenseNet, scaler: MinMaxScaler, test: FlowDataset
) -> ClassReport:
    preds, _ = predict(ae, clf, scaler, test.features)
    return class_report(confusion(preds, test.labels))


def run_experiment(
    config: ExperimentConfig,
    output_dir: str | None = None,
    seed: int | None = None,
) -> ExperimentResult:
    """Execute one experiment and write its artifact directory."""
    started = time.time()
    if seed is not None:
        config.seed = seed
        config.raw = dict(config.raw, seed=seed)
    if output_dir is not None:
        config.output_dir = output_dir
        config.raw = dict(config.raw, output_dir=output_dir)

    splits = _materialize_datasets(config)
    test = _build_test_set(config, splits)
    out_dir = Path(config.output_dir) / config.name / f"seed-{config.seed}"
    out_dir.mkdir(parents=True, exist_ok=True)

    meta: dict = {"mode": config.mode, "clients": [c.name for c in config.clients]}
    if config.mode == "central":
        result = _run_central(config, splits, test, out_dir, meta)
    else:
        result = _run_federated(config, splits, test, out_dir, meta)

    meta["seconds"] = round(time.time() - started, 3)
    meta["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    with open(out_dir / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return result


def _write_common_artifacts(
    config: ExperimentConfig,
    out_dir: Path,
    reports: dict[str, ClassReport],
    round_logs: list,
    headline: float,
    extra_json: dict,
) -> None:
    with open(out_dir / "config.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.raw, fh, sort_keys=True)
    if round_logs:
        client_ids = sorted({cid for r in round_logs for cid in r.per_client_counts})
        with open(out_dir / "rounds.csv", "w", encoding="utf-8") as fh:
            fh.write("round,phase,loss," + ",".join(client_ids) + "\n")
            for r in round_logs:
                loss = "" if r.global_eval_loss is None else repr(r.global_eval_loss)
                counts = ",".join(
                    str(r.per_client_counts.get(cid, "")) for cid in client_ids
                )
                fh.write(f"{r.round},{r.phase},{loss},{counts}\n")
        emit_loss_curve(round_logs, out_dir / "loss_curve.csv")
    text = []
    for key in sorted(reports):
        text.append(render_report(reports[key], title=f"[{key}]"))
    text.append(f"headline macro-F1: {headline:.4f}\n")
    (out_dir / "report.txt").write_text("\n".join(text), encoding="utf-8")
    payload = {
        "headline_f1": headline,
        "reports": {
            key: {
                "benign": vars(rep.benign) | {"row": list(rep.benign.row)},
                "attack": vars(rep.attack) | {"row": list(rep.attack.row)},
                "accuracy": rep.accuracy,
                "zero_division_flags": list(rep.zero_division_flags),
                "macro_f1": rep.macro_f1,
            }
            for key, rep in reports.items()
        },
    } | extra_json
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def _threshold_extra(config, ae, scaler, splits, test) -> dict:
    if not config.report_threshold_baseline:
        return {}
    val_parts_b, val_parts_a = [], []
    for c in config.clients:
        clf_part = splits[c.dataset].clf_train
        if clf_part is None or clf_part.labels is None:
            continue
        val_parts_b.append(clf_part.take(np.flatnonzero(clf_part.labels == 0)))
        val_parts_a.append(clf_part.take(np.flatnonzero(clf_part.labels == 1)))
    if not val_parts_b or not val_parts_a:
        return {}
    test_b = test.take(np.flatnonzero(test.labels == 0))
    test_a = test.take(np.flatnonzero(test.labels == 1))
    if test_b.n_rows == 0 or test_a.n_rows == 0:
        return {}
    thr, rep = threshold_baseline(
        ae, scaler,
        FlowDataset.concat(val_parts_b), FlowDataset.concat(val_parts_a),
        test_b, test_a,
    )
    return {
        "threshold_baseline": {
            "threshold": thr,
            "benign_f1": rep.benign.f1,
            "attack_f1": rep.attack.f1,
            "accuracy": rep.accuracy,
        }
    }


def _run_central(config, splits, test, out_dir, meta) -> ExperimentResult:
    ae_parts, clf_parts = [], []
    for c in config.clients:
        ae_parts.append(splits[c.dataset].ae_train)
        if splits[c.dataset].clf_train is not None:
            clf_parts.append(splits[c.dataset].clf_train)
    ae_data = FlowDataset.concat(ae_parts, name="central/ae")
    if not clf_parts:
        raise ConfigError("central mode needs labeled classifier rows")
    clf_data = FlowDataset.concat(clf_parts, name="central/clf")

    # Central baseline scaler: exact bounds of the merged training rows.
    all_rows = np.concatenate([ae_data.features, clf_data.features], axis=0)
    scaler = client_update(init_scaler(all_rows.shape[1]), all_rows)
    save_scaler(scaler, out_dir / "scaler.txt",
                feature_names=list(ae_data.schema.feature_names))

    stream = config.clients[0].name if len(config.clients) == 1 else "central"
    scaled_ae = FlowDataset(
        scale(scaler, ae_data.features), None, ae_data.schema, ae_data.name
    )
    ae_net = config.model.ae_config().build(child_rng(config.seed, "init", "ae"))
    rng_ae = child_rng(config.seed, "train", "ae", stream)
    round_logs: list[RoundLog] = []

    def log_round(r, phase, net, eval_fn):
        if r % config.eval_every == 0 or r == (
            config.ae_rounds if phase == "ae" else config.clf_rounds
        ):
            round_logs.append(RoundLog(r, phase, eval_fn(net), {stream: 0}))

    test_scaled = scale(scaler, test.features)
    benign_eval = test_scaled[test.labels == 0]

    def ae_eval(net):
        d = benign_eval - net.forward(benign_eval)
        return float(np.mean(d * d))

    for r in range(1, config.ae_rounds + 1):
        train_central(
            ae_net, scaled_ae, 1, config.strategy, config.model.ae_optimizer,
            rng_ae, persist_optimizer=config.persist_optimizer,
        )
        log_round(r, "ae", ae_net, ae_eval)

    clf_features = FlowDataset(
        reconstruction_error(ae_net, scale(scaler, clf_data.features)),
        clf_data.labels, clf_data.schema, "central/recon",
    )
    clf_net = config.model.clf_config().build(child_rng(config.seed, "init", "clf"))
    rng_clf = child_rng(config.seed, "train", "clf", stream)

    test_errors = reconstruction_error(ae_net, test_scaled)

    def clf_eval(net):
        probs = net.forward(test_errors)
        picked = np.clip(probs[np.arange(test.n_rows), test.labels], 1e-12, 1.0)
        return float(np.mean(-np.log(picked)))

    for r in range(1, config.clf_rounds + 1):
        train_central(
            clf_net, clf_features, 1, config.strategy, config.model.clf_optimizer,
            rng_clf, persist_optimizer=config.persist_optimizer,
        )
        log_round(r, "clf", clf_net, clf_eval)

    save_checkpoint(ae_net, out_dir / "ae.npz")
    save_checkpoint(clf_net, out_dir / "clf.npz")
    report = _evaluate(ae_net, clf_net, scaler, test)
    reports = {"global": report}
    extra = _threshold_extra(config, ae_net, scaler, splits, test)
    _write_common_artifacts(
        config, out_dir, reports, round_logs, report.macro_f1, extra
    )
    return ExperimentResult(out_dir, reports, report.macro_f1, round_logs, meta)


def _run_federated(config, splits, test, out_dir, meta) -> ExperimentResult:
    nodes = []
    for c in config.clients:
        part = splits[c.dataset]
        clf_part = part.clf_train if c.labeled else None
        nodes.append(ClientNode(c.name, part.ae_train, clf_part))

    plan = FederationPlan(
        ae_rounds=config.ae_rounds,
        clf_rounds=config.clf_rounds,
        strategy=config.strategy,
        seed=config.seed,
        eval_every=config.eval_every,
        persist_optimizer=config.persist_optimizer,
        checkpoint_every=config.checkpoint_every,
    )
    transport = InProcessTransport()
    benign_eval = test.take(np.flatnonzero(test.labels == 0), name="test/benign")
    server = FederationServer(
        nodes, plan,
        ae_config=config.model.ae_config(),
        clf_config=config.model.clf_config(),
        transport=transport,
        eval_benign=benign_eval,
        eval_labeled=test,
    )
    if config.checkpoint_every:
        server.checkpoint_hook = lambda phase, r, net: save_checkpoint(
            net, out_dir / f"{phase}-round-{r}.npz"
        )

    feature_names = list(nodes[0].ae_train.schema.feature_names)
    if config.scaler.per_client:
        scalers = server.run_scaler_phase(per_client=True)
        for cid, sc in scalers.items():
            save_scaler(sc, out_dir / f"scaler-{cid}.txt", feature_names=feature_names)
        meta["scaler"] = {"per_client": True}
    else:
        scaler = server.run_scaler_phase(
            mode=config.scaler.mode, low=config.scaler.low, high=config.scaler.high
        )
        save_scaler(scaler, out_dir / "scaler.txt", feature_names=feature_names)
        meta["scaler"] = {
            "per_client": False,
            "mode": config.scaler.mode,
            "visit_order": list(scaler.visit_log),
            "retained_bounds": count_retained_bounds(server.initial_scaler, scaler),
        }

    ae_net = server.run_ae_phase()
    clf_net = server.run_clf_phase()
    save_checkpoint(ae_net, out_dir / "ae.npz")
    save_checkpoint(clf_net, out_dir / "clf.npz")

    reports: dict[str, ClassReport] = {}
    if config.scaler.per_client:
        for node in server.clients:
            reports[node.id] = _evaluate(ae_net, clf_net, node.scaler, test)
        headline = float(np.mean([r.macro_f1 for r in reports.values()]))
    else:
        reports["global"] = _evaluate(ae_net, clf_net, server.global_scaler, test)
        headline = reports["global"].macro_f1

    meta["transport_payloads"] = audit_payload_kinds(transport.log)
    extra = {}
    if not config.scaler.per_client:
        extra = _threshold_extra(config, ae_net, server.global_scaler, splits, test)
    _write_common_artifacts(
        config, out_dir, reports, server.round_logs, headline, extra
    )
    return ExperimentResult(out_dir, reports, headline, server.round_logs, meta)
