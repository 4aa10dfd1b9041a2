from .audit import AuditLog, artifact_set_hash, file_digest
from .bus import PeerBus, Receipt
from .clock import VirtualClock, WallClock
from .messages import PEER_KINDS, ControlMessage, ControlReply, Heartbeat, PeerMessage, Status
from .monitor import FailureDetector, LivenessEvent, monitor
from .runtime import (Agent, AgentEnv, AgentFailure, MergedResult, Orchestrator, Pool, TaskOutcome,
                      default_split, replay_control_log, result_hash)
from .wire import decode_frames, decode_messages, encode_frame, recv_frame, send_frame

__all__ = [
    "AuditLog", "artifact_set_hash", "file_digest", "PeerBus", "Receipt", "VirtualClock", "WallClock",
    "PEER_KINDS", "ControlMessage", "ControlReply", "Heartbeat", "PeerMessage", "Status",
    "FailureDetector", "LivenessEvent", "monitor", "Agent", "AgentEnv", "AgentFailure", "MergedResult",
    "Orchestrator", "Pool", "TaskOutcome", "default_split", "replay_control_log", "result_hash",
    "decode_frames", "decode_messages", "encode_frame", "recv_frame", "send_frame",
]
