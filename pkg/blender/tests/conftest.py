"""Test environment for the host-side package.

Installs lightweight fake ``bpy`` and ``mathutils`` modules into sys.modules
before the runner or the add-on import them, and provides a stub HTTP
generation service. Tests needing a real modeling host are skipped when none
is installed.
"""

import http.server
import json
import sys
import threading
import time
from pathlib import Path

import pytest

BLENDER_DIR = Path(__file__).resolve().parent.parent
if str(BLENDER_DIR) not in sys.path:
    sys.path.insert(0, str(BLENDER_DIR))


import fake_bpy_env

FAKE_BPY = fake_bpy_env.install()


@pytest.fixture()
def fake_bpy():
    """Fresh fake scene per test."""
    FAKE_BPY.ops.wm.read_factory_settings(use_empty=True)
    FAKE_BPY.app.timers.callbacks.clear()
    FAKE_BPY.data.texts.items.clear()
    from rag3d_addon.state import reset_state

    reset_state()
    return FAKE_BPY


# ── stub generation service ─────────────────────────────────────────────────

from fake_bpy_env import CUBE_SCRIPT  # reused by the stub service default


class StubService:
    """Configurable stand-in for the generation service HTTP API."""

    def __init__(self):
        self.script = CUBE_SCRIPT
        self.refine_script = CUBE_SCRIPT
        self.delay = 0.0
        self.requests = []  # (method, path, body)
        self.turn_index = 0
        self._server = None
        self.url = ""

    def start(self):
        stub = self

        class Handler(http.server.BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def _reply(self, payload, status=200):
                body = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                stub.requests.append(("GET", self.path, None))
                if self.path == "/health":
                    self._reply(
                        {"status": "ok", "index_size": 10, "corpus_size": 10, "providers": ["mock", "mock-b"]}
                    )
                else:
                    self._reply({"error": "NotFound", "message": self.path}, status=404)

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length).decode("utf-8")) if length else {}
                stub.requests.append(("POST", self.path, body))
                if stub.delay:
                    time.sleep(stub.delay)
                if self.path == "/sessions":
                    self._reply({"session_id": "sess-1"})
                elif self.path.endswith("/generate"):
                    stub.turn_index += 1
                    self._reply(
                        {"turn_index": stub.turn_index, "script": stub.script, "failure_stage": None}
                    )
                elif self.path.endswith("/refine"):
                    stub.turn_index += 1
                    self._reply(
                        {"turn_index": stub.turn_index, "script": stub.refine_script, "failure_stage": None}
                    )
                else:
                    self._reply({"error": "NotFound", "message": self.path}, status=404)

        self._server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=self._server.serve_forever, daemon=True).start()
        self.url = f"http://127.0.0.1:{self._server.server_address[1]}"
        return self

    def stop(self):
        if self._server:
            self._server.shutdown()
            self._server.server_close()


@pytest.fixture()
def stub_service():
    service = StubService().start()
    yield service
    service.stop()
