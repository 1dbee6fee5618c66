"""Random linear network coding of federated-learning model updates over GF(2^s)."""
from .codec import (
    AbsorbOutcome,
    CodedPacket,
    DecoderState,
    Packet,
    deserialize_coded,
    encode,
    random_coding_vector,
    serialize_coded,
)
from .federation import FederationConfig, aggregate, run_fedavg_round, run_fednc_round
from .galois import FieldSpec
from .seeding import seed_stream

__version__ = "0.1.0"
