"""fedids: a desk-scale federated learning lab for network anomaly detection.

Trains an undercomplete autoencoder plus a reconstruction-feature
classifier across simulated clients, with a collaboratively established
min-max scaler and pluggable fusion strategies (weighted averaging,
ordered mini-batch groups, fixed-size per-round sampling).
"""

__version__ = "0.1.0"

from .data import (
    CIC_SCHEMA,
    FeatureSchema,
    FlowDataset,
    SplitSpec,
    SynthSpec,
    load_flow_csv,
    split,
    synth_generate,
    synthetic_schema,
)
from .errors import (
    CapacityError,
    ConfigError,
    EmptyInputError,
    FedIDSError,
    ParticipationError,
    ProtocolError,
    SchemaError,
    ShapeError,
)
from .federation import (
    ClientNode,
    FederationPlan,
    FederationServer,
    NetConfig,
    RoundLog,
    generate_classifier_features,
    predict,
    train_central,
)
from .fusion import (
    ClientCursor,
    FedAvgMultiEpoch,
    FedMMB,
    FedSam,
    client_round,
    fed_avg,
    fedmmb_select,
    fedsam_sample,
)
from .messages import FLMessage, InProcessTransport, MessageKind
from .metrics import (
    ClassReport,
    ConfusionMatrix,
    class_report,
    confusion,
    emit_loss_curve,
    threshold_baseline,
)
from .nn import (
    DenseNet,
    OptimizerConfig,
    OptimizerState,
    ParamVector,
    backward,
    cross_entropy_loss,
    forward,
    load_checkpoint,
    mse_loss,
    optimizer_step,
    reconstruction_error,
    save_checkpoint,
    train_batch,
)
from .scaling import (
    MinMaxScaler,
    client_update,
    init_scaler,
    load_scaler,
    ring_orchestrate,
    save_scaler,
    scale,
)
from .seeding import child_rng
