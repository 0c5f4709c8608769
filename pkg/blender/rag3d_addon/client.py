"""HTTP client for the generation service.

Uses only the standard library so the add-on runs inside the host's bundled
Python with no extra installs. Raises ServiceUnreachable for transport
problems and ServiceError for HTTP error responses; LLM credentials never
pass through here, they live with the service.
"""

import json
import urllib.error
import urllib.request

DEFAULT_TIMEOUT = 60.0


class ServiceUnreachable(Exception):
    pass


class ServiceError(Exception):
    def __init__(self, status, code, message):
        super().__init__(f"{status} {code}: {message}")
        self.status = status
        self.code = code


class ServiceClient:
    def __init__(self, base_url, auth_token="", timeout=DEFAULT_TIMEOUT):
        self.base_url = base_url.rstrip("/")
        self.auth_token = auth_token
        self.timeout = timeout

    def _request(self, method, path, body=None):
        url = f"{self.base_url}{path}"
        data = json.dumps(body).encode("utf-8") if body is not None else None
        request = urllib.request.Request(url, data=data, method=method)
        request.add_header("Content-Type", "application/json")
        if self.auth_token:
            request.add_header("Authorization", f"Bearer {self.auth_token}")
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                return json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read().decode("utf-8"))
                raise ServiceError(exc.code, payload.get("error", "Error"), payload.get("message", "")) from None
            except ValueError:
                raise ServiceError(exc.code, "Error", str(exc)) from None
        except (urllib.error.URLError, OSError) as exc:
            raise ServiceUnreachable(f"service unreachable at {self.base_url}: {exc}") from None

    def health(self):
        return self._request("GET", "/health")

    def create_session(self, provider_id, mode="rag", settings=None):
        body = {"provider_id": provider_id, "mode": mode}
        if settings:
            body["settings"] = settings
        return self._request("POST", "/sessions", body)["session_id"]

    def generate(self, session_id, request_text):
        return self._request("POST", f"/sessions/{session_id}/generate", {"request": request_text})

    def refine(self, session_id, follow_up):
        return self._request("POST", f"/sessions/{session_id}/refine", {"follow_up": follow_up})
