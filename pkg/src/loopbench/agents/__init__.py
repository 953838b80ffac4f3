from .actions import Action, ActionParseError, ActionStatus, format_action, parse_action
from .base import Agent, AgentError, PlanRequest, PlanResponse, WarmStart
from .noisy import ErrorModel, NoisyAgent, noisy_plan
from .oracle import OracleAgent, Unsatisfiable, oracle_plan
from .remote import RemoteAgent, RemoteConfig, build_prompt, parse_response, remote_plan

__all__ = [
    "Action",
    "ActionParseError",
    "ActionStatus",
    "Agent",
    "AgentError",
    "ErrorModel",
    "NoisyAgent",
    "OracleAgent",
    "PlanRequest",
    "PlanResponse",
    "RemoteAgent",
    "RemoteConfig",
    "Unsatisfiable",
    "WarmStart",
    "build_prompt",
    "format_action",
    "noisy_plan",
    "oracle_plan",
    "parse_action",
    "parse_response",
    "remote_plan",
]
