"""Add-on state shared between the panel and the operators."""

from dataclasses import dataclass, field


@dataclass
class AddonState:
    service_url: str = "http://127.0.0.1:8040"
    auth_token: str = ""
    provider_id: str = ""
    providers: list = field(default_factory=list)
    connected: bool = False
    session_id: str = ""
    prompt: str = ""
    replace_previous: bool = True  # refinement deletes the prior turn's objects
    busy: bool = False
    turn_count: int = 0
    status: str = "not connected"
    last_error: str = ""
    last_created_objects: list = field(default_factory=list)


state = AddonState()


def reset_state() -> None:
    global state
    state.__dict__.update(AddonState().__dict__)
