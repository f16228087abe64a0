from .client import ChatGateway, GatewayConfig, GatewayError, ReplayGateway, get_gateway
from .ledger import LEDGER, CallLedger, ledger_snapshot, reset_ledger

__all__ = [
    "CallLedger",
    "ChatGateway",
    "GatewayConfig",
    "GatewayError",
    "LEDGER",
    "ReplayGateway",
    "get_gateway",
    "ledger_snapshot",
    "reset_ledger",
]
