from .app import create_app
from .state import FrameBuffer, ServiceState, WarmingUp, read_frames, run_feed, tail_frames

__all__ = ["create_app", "FrameBuffer", "ServiceState", "WarmingUp", "read_frames", "run_feed", "tail_frames"]
