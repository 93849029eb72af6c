"""Federated training orchestration.

A run proceeds in three strictly ordered phases over a fixed set of
clients: establish a shared min-max scaler (ring pass plus broadcast),
train the autoencoder on each client's benign data, then train the
classifier on each client's reconstruction-error features. Unlabeled
clients participate in the scaler and autoencoder phases only.

The server is a sequential state machine; clients only ever see global
parameters and scaler bounds through the transport, never each other's
rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import FlowDataset
from .errors import (
    ConfigError,
    EmptyInputError,
    ParticipationError,
    ProtocolError,
)
from .fusion import (
    ClientCursor,
    FedMMB,
    FusionStrategy,
    client_round,
    fed_avg,
)
from .messages import FLMessage, InProcessTransport, MessageKind
from .nn import (
    DenseNet,
    OptimizerConfig,
    OptimizerState,
    ParamVector,
    reconstruction_error,
)
from .scaling import MinMaxScaler, client_update, init_scaler, ring_orchestrate, scale
from .seeding import child_rng

log = logging.getLogger(__name__)

AE_PHASE = "ae"
CLF_PHASE = "clf"


@dataclass(frozen=True)
class NetConfig:
    """Topology plus optimizer for one of the two model roles."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def build(self, rng: np.random.Generator) -> DenseNet:
        return DenseNet.create(
            list(self.layer_sizes), self.hidden_activation,
            self.output_activation, rng,
        )


def default_ae_config(n_features: int = 75) -> NetConfig:
    mid = max(2, n_features * 2 // 3)
    bottleneck = max(1, n_features // 5)
    return NetConfig(
        (n_features, mid, bottleneck, mid, n_features),
        optimizer=OptimizerConfig(kind="rmsprop"),
    )


def default_clf_config(n_features: int = 75) -> NetConfig:
    return NetConfig(
        (n_features, 32, 16, 2),
        output_activation="softmax",
        optimizer=OptimizerConfig(kind="adam"),
    )


@dataclass
class FederationPlan:
    ae_rounds: int
    clf_rounds: int
    strategy: FusionStrategy
    seed: int
    eval_every: int = 10
    persist_optimizer: bool = False
    checkpoint_every: int = 0  # 0: final checkpoints only

    def __post_init__(self) -> None:
        if self.ae_rounds < 1 or self.clf_rounds < 1:
            raise ConfigError("round counts must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")


@dataclass
class RoundLog:
    round: int
    phase: str
    global_eval_loss: float | None
    per_client_counts: dict[str, int]


class ClientNode:
    """Simulated client: private data plus local training state."""

    def __init__(
        self,
        node_id: str,
        ae_train: FlowDataset,
        clf_train: FlowDataset | None = None,
    ) -> None:
        if ae_train.n_rows == 0:
            raise EmptyInputError(f"client {node_id!r} has no autoencoder rows")
        if ae_train.labels is not None and np.any(ae_train.labels != 0):
            raise ConfigError(f"client {node_id!r} ae_train must be benign only")
        self.id = node_id
        self.ae_train = ae_train
        self.clf_train = clf_train
        self.scaler: MinMaxScaler | None = None
        self.global_ae: DenseNet | None = None
        self.global_clf: DenseNet | None = None
        self.clf_features: FlowDataset | None = None
        # bound by the server before a run
        self._strategy: FusionStrategy | None = None
        self._ae_config: NetConfig | None = None
        self._clf_config: NetConfig | None = None
        self._phase = AE_PHASE
        self._local_net: DenseNet | None = None
        self._opt_state: OptimizerState | None = None
        self._persist_optimizer = False
        self._rng: dict[str, np.random.Generator] = {}
        self._cursor: dict[str, ClientCursor] = {}
        self._scaled_ae: np.ndarray | None = None

    @property
    def participates_in_classifier(self) -> bool:
        return self.clf_train is not None

    def _bind(
        self,
        strategy: FusionStrategy,
        ae_config: NetConfig,
        clf_config: NetConfig,
        seed: int,
        persist_optimizer: bool,
    ) -> None:
        self._strategy = strategy
        self._ae_config = ae_config
        self._clf_config = clf_config
        self._persist_optimizer = persist_optimizer
        self._rng = {
            AE_PHASE: child_rng(seed, "train", AE_PHASE, self.id),
            CLF_PHASE: child_rng(seed, "train", CLF_PHASE, self.id),
        }
        self._cursor = {}
        self._phase = AE_PHASE

    def all_local_rows(self) -> np.ndarray:
        """Every local row, the view the scaler ring validates against."""
        parts = [self.ae_train.features]
        if self.clf_train is not None:
            parts.append(self.clf_train.features)
        return np.concatenate(parts, axis=0)

    def set_scaler(self, scaler: MinMaxScaler) -> None:
        self.scaler = scaler.copy()
        self._scaled_ae = scale(self.scaler, self.ae_train.features)

    def _phase_dataset(self) -> FlowDataset:
        if self._phase == AE_PHASE:
            return FlowDataset(
                self._scaled_ae, None, self.ae_train.schema, self.ae_train.name
            )
        if self.clf_features is None:
            raise ParticipationError(
                f"client {self.id!r} has no classifier features"
            )
        return self.clf_features

    def _phase_cursor(self, dataset: FlowDataset) -> ClientCursor | None:
        if not isinstance(self._strategy, FedMMB):
            return None
        if self._phase not in self._cursor:
            self._cursor[self._phase] = ClientCursor.fresh(
                dataset.n_rows, self._rng[self._phase]
            )
        return self._cursor[self._phase]

    def build_classifier_features(self) -> None:
        self.clf_features = generate_classifier_features(self, self.global_ae)

    def handle(self, msg: FLMessage) -> FLMessage | None:
        """Transport entry point; dispatch on message kind."""
        if msg.kind == MessageKind.SCALER_PASS:
            updated = client_update(msg.payload, self.all_local_rows())
            return FLMessage(MessageKind.SCALER_PASS, msg.round, self.id, updated)
        if msg.kind == MessageKind.SCALER_BROADCAST:
            self.set_scaler(msg.payload)
            return None
        if msg.kind == MessageKind.GLOBAL_MODEL:
            return self._train_round(msg)
        if msg.kind == MessageKind.PHASE_ADVANCE:
            self._advance_phase(msg)
            return None
        raise ProtocolError(f"client {self.id!r} cannot handle {msg.kind.name}")

    def _train_round(self, msg: FLMessage) -> FLMessage:
        if self.scaler is None:
            raise ProtocolError(f"client {self.id!r} has no scaler yet")
        config = self._ae_config if self._phase == AE_PHASE else self._clf_config
        dataset = self._phase_dataset()
        if self._local_net is None or self._local_net.param_count() != msg.payload.values.size:
            self._local_net = config.build(np.random.default_rng(0))
        self._local_net.set_params(msg.payload.values)
        if self._opt_state is None or not self._persist_optimizer:
            self._opt_state = config.optimizer.make_state(self._local_net.param_count())
        update = client_round(
            self._local_net,
            self._strategy,
            dataset,
            self._opt_state,
            rng=self._rng[self._phase],
            cursor=self._phase_cursor(dataset),
        )
        return FLMessage(MessageKind.CLIENT_UPDATE, msg.round, self.id, update)

    def _advance_phase(self, msg: FLMessage) -> None:
        if self._phase == AE_PHASE:
            final = self._ae_config.build(np.random.default_rng(0))
            final.set_params(msg.payload.values)
            self.global_ae = final
            if self.participates_in_classifier:
                self.build_classifier_features()
            self._phase = CLF_PHASE
            self._local_net = None
            self._opt_state = None
        else:
            final = self._clf_config.build(np.random.default_rng(0))
            final.set_params(msg.payload.values)
            self.global_clf = final


def generate_classifier_features(client: ClientNode, global_ae: DenseNet) -> FlowDataset:
    """Map each labeled row to its per-feature reconstruction error.

    Row order and labels are preserved; the result is what the
    classifier trains on.
    """
    if client.clf_train is None:
        raise ParticipationError(
            f"client {client.id!r} is unlabeled and cannot build classifier features"
        )
    if global_ae is None:
        raise ProtocolError("global autoencoder not available yet")
    if client.scaler is None:
        raise ProtocolError(f"client {client.id!r} has no scaler yet")
    scaled = scale(client.scaler, client.clf_train.features)
    errors = reconstruction_error(global_ae, scaled)
    return FlowDataset(
        errors,
        client.clf_train.labels.copy(),
        client.clf_train.schema,
        name=f"{client.id}/recon",
    )


class FederationServer:
    """Drives the three-phase pipeline over registered clients."""

    def __init__(
        self,
        clients: list[ClientNode],
        plan: FederationPlan,
        ae_config: NetConfig | None = None,
        clf_config: NetConfig | None = None,
        transport: InProcessTransport | None = None,
        eval_benign: FlowDataset | None = None,
        eval_labeled: FlowDataset | None = None,
    ) -> None:
        if not clients:
            raise EmptyInputError("federation needs at least one client")
        ids = [c.id for c in clients]
        if len(set(ids)) != len(ids):
            raise ConfigError("client ids must be unique")
        n_features = clients[0].ae_train.schema.feature_count
        self.clients = sorted(clients, key=lambda c: c.id)
        self.plan = plan
        self.ae_config = ae_config or default_ae_config(n_features)
        self.clf_config = clf_config or default_clf_config(n_features)
        _check_autoencoder_topology(self.ae_config, n_features)
        _check_classifier_topology(self.clf_config, n_features)
        self.transport = transport or InProcessTransport()
        self.eval_benign = eval_benign
        self.eval_labeled = eval_labeled
        self.round_logs: list[RoundLog] = []
        self.global_ae: DenseNet | None = None
        self.global_clf: DenseNet | None = None
        self.global_scaler: MinMaxScaler | None = None
        self.initial_scaler: MinMaxScaler | None = None
        self.client_scalers: dict[str, MinMaxScaler] = {}
        self.per_client_mode = False
        self.checkpoint_hook = None  # callable(phase, round, net) or None
        self._phase = "init"
        for c in self.clients:
            c._bind(
                plan.strategy, self.ae_config, self.clf_config,
                plan.seed, plan.persist_optimizer,
            )
            self.transport.register(c.id, c.handle)

    # -- phase 1: scaler ------------------------------------------------

    def run_scaler_phase(
        self,
        mode: str = "sentinel",
        per_client: bool = False,
        low: float = -1.0,
        high: float = 1.0,
    ) -> MinMaxScaler | dict[str, MinMaxScaler]:
        if self._phase != "init":
            raise ProtocolError(f"scaler phase cannot run from state {self._phase!r}")
        rng = child_rng(self.plan.seed, "scaler")
        n_features = self.clients[0].ae_train.schema.feature_count

        if per_client:
            # Ablation mode: every client fits bounds to its own rows only.
            self.per_client_mode = True
            for c in self.clients:
                own = client_update(init_scaler(n_features), c.all_local_rows())
                self.transport.call(
                    c.id, FLMessage(MessageKind.SCALER_BROADCAST, 0, "server", own)
                )
                self.client_scalers[c.id] = own
            self._phase = "scaled"
            return dict(self.client_scalers)

        def pass_to(cid: str, scaler: MinMaxScaler) -> MinMaxScaler:
            reply = self.transport.call(
                cid, FLMessage(MessageKind.SCALER_PASS, 0, "server", scaler)
            )
            if reply is None or reply.kind != MessageKind.SCALER_PASS:
                raise ProtocolError(f"client {cid!r} did not return the scaler")
            return reply.payload

        initial = init_scaler(n_features, mode, rng=rng, low=low, high=high)
        self.initial_scaler = initial.copy()
        scaler = ring_orchestrate(
            {c.id: c.ae_train for c in self.clients},
            rng=rng,
            update_fn=pass_to,
            n_features=n_features,
            initial=initial,
        )
        unvisited = {c.id for c in self.clients} - set(scaler.visit_log)
        if unvisited:
            raise ProtocolError(f"clients never visited by the ring: {sorted(unvisited)}")
        for c in self.clients:
            self.transport.call(
                c.id, FLMessage(MessageKind.SCALER_BROADCAST, 0, "server", scaler)
            )
            self.client_scalers[c.id] = scaler
        self.global_scaler = scaler
        self._phase = "scaled"
        return scaler

    # -- phases 2 and 4: federated rounds --------------------------------

    def _fl_rounds(
        self,
        phase: str,
        rounds: int,
        participants: list[ClientNode],
        global_net: DenseNet,
        eval_fn,
    ) -> DenseNet:
        for r in range(1, rounds + 1):
            params = global_net.get_params()
            updates: dict[str, ParamVector] = {}
            for c in participants:
                reply = self.transport.call(
                    c.id,
                    FLMessage(
                        MessageKind.GLOBAL_MODEL, r, "server",
                        ParamVector(params.copy(), 0),
                    ),
                )
                if reply is None or reply.kind != MessageKind.CLIENT_UPDATE:
                    raise ProtocolError(f"client {c.id!r} returned no update")
                if reply.payload.values.size != params.size:
                    raise ProtocolError(
                        f"client {c.id!r} update does not match global topology"
                    )
                updates[c.id] = reply.payload
            fused = fed_avg(updates)
            global_net.set_params(fused.values)
            if r % self.plan.eval_every == 0 or r == rounds:
                self.round_logs.append(
                    RoundLog(
                        r, phase, eval_fn(global_net),
                        {cid: u.count for cid, u in updates.items()},
                    )
                )
            if (
                self.checkpoint_hook is not None
                and self.plan.checkpoint_every
                and r % self.plan.checkpoint_every == 0
            ):
                self.checkpoint_hook(phase, r, global_net)
        return global_net

    def _eval_ae_loss(self, net: DenseNet) -> float | None:
        if self.eval_benign is None:
            return None
        scaler = self._eval_scaler()
        x = scale(scaler, self.eval_benign.features)
        d = x - net.forward(x)
        return float(np.mean(d * d))

    def _eval_clf_loss(self, net: DenseNet) -> float | None:
        if self.eval_labeled is None or self.global_ae is None:
            return None
        scaler = self._eval_scaler()
        x = scale(scaler, self.eval_labeled.features)
        errors = reconstruction_error(self.global_ae, x)
        probs = net.forward(errors)
        labels = self.eval_labeled.labels
        picked = np.clip(probs[np.arange(len(labels)), labels], 1e-12, 1.0)
        return float(np.mean(-np.log(picked)))

    def _eval_scaler(self) -> MinMaxScaler:
        if self.global_scaler is not None:
            return self.global_scaler
        # Per-client ablation has no shared bounds; evaluate with bounds
        # fit on the server's own eval rows.
        source = self.eval_benign if self.eval_benign is not None else self.eval_labeled
        return client_update(init_scaler(source.features.shape[1]), source.features)

    def run_ae_phase(self) -> DenseNet:
        if self._phase != "scaled":
            raise ProtocolError(f"AE phase cannot run from state {self._phase!r}")
        net = self.ae_config.build(child_rng(self.plan.seed, "init", AE_PHASE))
        net = self._fl_rounds(
            AE_PHASE, self.plan.ae_rounds, self.clients, net, self._eval_ae_loss
        )
        self.global_ae = net
        final = ParamVector(net.get_params(), 0)
        for c in self.clients:
            self.transport.call(
                c.id,
                FLMessage(MessageKind.PHASE_ADVANCE, self.plan.ae_rounds, "server", final),
            )
        self._phase = "ae_done"
        return net

    def run_clf_phase(self) -> DenseNet:
        if self._phase != "ae_done":
            raise ProtocolError(f"classifier phase cannot run from state {self._phase!r}")
        participants = [c for c in self.clients if c.participates_in_classifier]
        if not participants:
            raise ConfigError("no clients can participate in the classifier phase")
        net = self.clf_config.build(child_rng(self.plan.seed, "init", CLF_PHASE))
        net = self._fl_rounds(
            CLF_PHASE, self.plan.clf_rounds, participants, net, self._eval_clf_loss
        )
        self.global_clf = net
        final = ParamVector(net.get_params(), 0)
        for c in participants:
            self.transport.call(
                c.id,
                FLMessage(MessageKind.PHASE_ADVANCE, self.plan.clf_rounds, "server", final),
            )
        self._phase = "done"
        return net

    def predict(self, x_raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.global_ae is None or self.global_clf is None:
            raise ProtocolError("both phases must finish before predicting")
        return predict(self.global_ae, self.global_clf, self._eval_scaler(), x_raw)


def _check_autoencoder_topology(config: NetConfig, n_features: int) -> None:
    sizes = config.layer_sizes
    if sizes[0] != n_features or sizes[-1] != n_features:
        raise ConfigError("autoencoder input and output must match feature width")
    if min(sizes[1:-1]) >= sizes[0]:
        raise ConfigError("autoencoder must have an undercomplete interior layer")
    if config.output_activation != "linear":
        raise ConfigError("autoencoder output must be linear")


def _check_classifier_topology(config: NetConfig, n_features: int) -> None:
    sizes = config.layer_sizes
    if sizes[0] != n_features:
        raise ConfigError("classifier input must match feature width")
    if sizes[-1] != 2 or config.output_activation != "softmax":
        raise ConfigError("classifier must end in a 2-way softmax")


def predict(
    global_ae: DenseNet,
    global_clf: DenseNet,
    scaler: MinMaxScaler,
    x_raw: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Full pipeline: scale, reconstruction error, classifier probabilities.

    Returns (labels, probabilities). An exact probability tie resolves
    to benign (0).
    """
    x_raw = np.asarray(x_raw, dtype=np.float64)
    single = x_raw.ndim == 1
    x = scale(scaler, x_raw)
    errors = reconstruction_error(global_ae, x)
    probs = global_clf.forward(errors)
    p = probs[None, :] if single else probs
    labels = (p[:, 1] > p[:, 0]).astype(np.int64)
    if single:
        return labels[0], probs
    return labels, probs


def train_central(
    net: DenseNet,
    dataset: FlowDataset,
    rounds: int,
    strategy: FusionStrategy,
    optimizer: OptimizerConfig,
    rng: np.random.Generator,
    *,
    persist_optimizer: bool = False,
    cursor: ClientCursor | None = None,
) -> DenseNet:
    """Plain local training loop, the non-federated baseline.

    Runs the same per-round local pass a client would, directly on one
    dataset, with no broadcast or fusion in between.
    """
    if isinstance(strategy, FedMMB) and cursor is None:
        cursor = ClientCursor.fresh(dataset.n_rows, rng)
    state: OptimizerState | None = None
    for _ in range(rounds):
        if state is None or not persist_optimizer:
            state = optimizer.make_state(net.param_count())
        client_round(net, strategy, dataset, state, rng=rng, cursor=cursor)
    return net
