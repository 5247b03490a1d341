from __future__ import annotations

import threading

import pytest

from diplomat.service import ChatService, build_server


@pytest.fixture
def live_service(tmp_path):
    """A chat service listening on an ephemeral port; yields (base_url, service)."""
    service = ChatService(tmp_path / "data")
    server = build_server(service, host="127.0.0.1", port=0)
    port = server.server_address[1]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{port}", service
    finally:
        server.shutdown()
        server.server_close()
        service.close()
        thread.join(timeout=5)
