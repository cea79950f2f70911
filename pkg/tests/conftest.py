import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from assetforge import primitives
from assetforge.fileio import save_obj, write_png


class _Server:
    """Local HTTP endpoint; ``handler(path, headers, body) -> (status, content_type, bytes)``."""

    def __init__(self, handler):
        self.requests = []
        outer = self

        class H(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers.get("Content-Length", 0)))
                outer.requests.append({"path": self.path, "headers": dict(self.headers), "body": body})
                status, ctype, payload = handler(self.path, self.headers, body)
                self.send_response(status)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), H)
        self.url = f"http://127.0.0.1:{self.httpd.server_address[1]}/"
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def http_server():
    servers = []

    def start(handler):
        s = _Server(handler)
        servers.append(s)
        return s

    yield start
    for s in servers:
        s.close()


def json_reply(obj, status=200):
    return status, "application/json", json.dumps(obj).encode()


def write_asset_fixture(root, mesh=None, color=(0.0, 1.0, 0.0), size=64, extra=""):
    """Mesh + six solid views + YAML config under ``root``; returns the config path."""
    root.mkdir(parents=True, exist_ok=True)
    save_obj(mesh if mesh is not None else primitives.cube(), root / "mesh.obj")
    for i in range(6):
        write_png(root / f"view{i}.png", np.tile(np.asarray(color, float), (size, size, 1)))
    cfg = root / "config.yaml"
    cfg.write_text(
        "mesh: mesh.obj\n"
        "images: [view0.png, view1.png, view2.png, view3.png, view4.png, view5.png]\n"
        "bake: {texture_size: [128, 128]}\n"
        "output: bundle\n" + extra
    )
    return cfg


@pytest.fixture
def asset_fixture(tmp_path):
    return lambda name="asset", **kw: write_asset_fixture(tmp_path / name, **kw)


# ---- acceptance criteria reporting ----

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): test backs a numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "ran": False})
    if rep.failed:
        entry["passed"] = False
    if rep.when == "call":
        entry["ran"] = True


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["passed"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number}: {e['title']}")
