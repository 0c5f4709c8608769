"""Operators: connect to the service, generate, and refine.

Network calls run on a worker thread; a timer callback on the UI tick polls
for completion, so the panel keeps redrawing while a turn is in flight. The
busy flag gates re-entry (one in-flight turn per session, matching the
service's per-session serialization). Returned scripts execute directly in
the live scene behind an undo step: a failing script rolls back and the
object count is unchanged.
"""

import threading
import traceback

import bpy

from .client import ServiceClient, ServiceError, ServiceUnreachable
from .state import state

POLL_INTERVAL = 0.1


def make_client():
    return ServiceClient(state.service_url, auth_token=state.auth_token)


class ScriptExecutionError(Exception):
    pass


def scene_object_names():
    return [obj.name for obj in bpy.data.objects]


def execute_script_in_scene(script):
    """Run a generated script in the live scene behind an undo step.

    Returns the names of objects the script created; re-raises script
    failures after rolling the scene back.
    """
    before = set(scene_object_names())
    bpy.ops.ed.undo_push(message="rag3d script")
    try:
        exec(compile(script, "<rag3d-generated>", "exec"), {"__name__": "__main__"})
    except Exception:
        bpy.ops.ed.undo()
        raise ScriptExecutionError(traceback.format_exc(limit=8)) from None
    return [name for name in scene_object_names() if name not in before]


def remove_objects(names):
    for name in names:
        obj = bpy.data.objects.get(name) if hasattr(bpy.data.objects, "get") else None
        if obj is None:
            obj = next((o for o in bpy.data.objects if o.name == name), None)
        if obj is not None:
            bpy.data.objects.remove(obj)


def write_script_text_block(script, turn_index):
    # One line of behavior: users can open the script in the text editor.
    try:
        text = bpy.data.texts.new(f"rag3d_turn_{turn_index}.py")
        text.write(script)
    except Exception:
        pass  # text blocks are a convenience, never fatal


def frame_viewport():
    try:
        bpy.ops.view3d.view_all()
    except Exception:
        pass  # headless or no 3D view; framing is cosmetic


def apply_turn(turn, replace_names):
    """UI-thread half of a completed request: mutate the scene and status."""
    if turn.get("failure_stage"):
        state.last_error = f"{turn['failure_stage']}: {turn.get('failure_detail') or ''}"
        state.status = f"turn failed at {turn['failure_stage']}"
        return

    script = turn.get("script") or ""
    if not script:
        state.last_error = "turn returned no script"
        state.status = "turn failed: empty script"
        return

    if replace_names:
        remove_objects(replace_names)
    try:
        created = execute_script_in_scene(script)
    except ScriptExecutionError as exc:
        state.last_error = str(exc)
        state.status = "script failed in scene (rolled back)"
        return

    state.last_created_objects = created
    state.turn_count = turn.get("turn_index", state.turn_count + 1)
    state.status = f"turn {state.turn_count} complete"
    state.last_error = ""
    write_script_text_block(script, state.turn_count)
    frame_viewport()


class RequestWorker:
    """Background thread around one service call, polled by a timer."""

    def __init__(self, call):
        self._call = call
        self.result = None
        self.error = None
        self._thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        try:
            self.result = self._call()
        except Exception as exc:
            self.error = exc

    def start(self):
        self._thread.start()

    @property
    def done(self):
        return not self._thread.is_alive()


def _start_turn(call, replace_names):
    state.busy = True
    state.status = "generating..."
    worker = RequestWorker(call)
    worker.start()

    def poll():
        if not worker.done:
            return POLL_INTERVAL  # keep polling; UI stays responsive
        try:
            if worker.error is not None:
                raise worker.error
            apply_turn(worker.result, replace_names)
        except ServiceUnreachable as exc:
            state.connected = False
            state.last_error = str(exc)
            state.status = "service unreachable (retry after reconnect)"
        except ServiceError as exc:
            state.last_error = str(exc)
            state.status = f"service error {exc.status}"
        finally:
            state.busy = False
        return None  # unregister the timer

    bpy.app.timers.register(poll, first_interval=POLL_INTERVAL)
    return worker


class RAG3D_OT_connect(bpy.types.Operator):
    bl_idname = "rag3d.connect"
    bl_label = "Connect"
    bl_description = "Fetch service health and the provider registry"

    def execute(self, context):
        try:
            health = make_client().health()
        except (ServiceUnreachable, ServiceError) as exc:
            state.connected = False
            state.providers = []
            state.last_error = str(exc)
            state.status = "service unreachable"
            return {"CANCELLED"}
        state.providers = list(health.get("providers", []))
        state.connected = True
        if state.providers and state.provider_id not in state.providers:
            state.provider_id = state.providers[0]
        state.status = f"connected ({health.get('corpus_size', 0)} corpus entries)"
        state.last_error = ""
        return {"FINISHED"}


class RAG3D_OT_generate(bpy.types.Operator):
    bl_idname = "rag3d.generate"
    bl_label = "Generate"
    bl_description = "Generate an object from the prompt via the service"

    @classmethod
    def poll(cls, context):
        return state.connected and not state.busy

    def execute(self, context):
        prompt = state.prompt.strip()
        if not prompt:
            state.last_error = "prompt is empty"
            return {"CANCELLED"}
        if state.busy:
            return {"CANCELLED"}
        client = make_client()
        provider_id = state.provider_id

        def call():
            if not state.session_id:
                state.session_id = client.create_session(provider_id, mode="rag")
            return client.generate(state.session_id, prompt)

        _start_turn(call, replace_names=[])
        return {"FINISHED"}


class RAG3D_OT_refine(bpy.types.Operator):
    bl_idname = "rag3d.refine"
    bl_label = "Refine"
    bl_description = "Refine the previous result with a follow-up prompt"

    @classmethod
    def poll(cls, context):
        return state.connected and not state.busy and state.turn_count > 0

    def execute(self, context):
        follow_up = state.prompt.strip()
        if not follow_up:
            state.last_error = "prompt is empty"
            return {"CANCELLED"}
        if state.busy or not state.session_id:
            return {"CANCELLED"}
        client = make_client()
        session_id = state.session_id
        replace = list(state.last_created_objects) if state.replace_previous else []

        def call():
            return client.refine(session_id, follow_up)

        _start_turn(call, replace_names=replace)
        return {"FINISHED"}


OPERATORS = (RAG3D_OT_connect, RAG3D_OT_generate, RAG3D_OT_refine)
