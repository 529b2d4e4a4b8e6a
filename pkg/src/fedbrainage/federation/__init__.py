"""FedAvg orchestration over in-process or TCP transports."""

from .fedavg import (
    ClientSite,
    ClientUpdate,
    FederationPlan,
    RoundRecord,
    aggregate_fedavg,
    client_update,
    local_epoch,
    run_federation,
)
from .protocol import ParamsMessage, decode_params_message, encode_params_message
from .transport import InProcessTransport, TcpServerTransport, run_tcp_client, site_handler, start_client_threads

__all__ = [
    "ClientSite",
    "ClientUpdate",
    "FederationPlan",
    "InProcessTransport",
    "ParamsMessage",
    "RoundRecord",
    "TcpServerTransport",
    "aggregate_fedavg",
    "client_update",
    "decode_params_message",
    "encode_params_message",
    "local_epoch",
    "run_federation",
    "run_tcp_client",
    "site_handler",
    "start_client_threads",
]
