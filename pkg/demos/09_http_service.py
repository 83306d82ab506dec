"""The HTTP+JSON facade: permission admin, reads, writes, episodes, audit.

Everything the library does is reachable over the wire. Callers authenticate
with the X-Identity header; the server assigns all ticks and derives all
provenance itself, so no client can backdate or spoof a write.
"""

import json
import threading
import urllib.error
import urllib.request

from memfabric import MemoryService, ScenarioConfig, build_runtime, make_server

config = ScenarioConfig.from_dict(
    {
        "name": "service-demo",
        "seed": 2,
        "users": ["ana", "bo"],
        "agents": [
            {"id": "helper", "category": "general", "resource": "kb"}
        ],
        "resources": [{"id": "kb", "category": "general"}],
        "timeline": {"agent_resources": "one_to_one"},
        "workload": {"per_user": {"ana": [], "bo": []}},
        "embedder": {"kind": "deterministic", "dimension": 24},
    }
)

runtime = build_runtime(config)
server = make_server(MemoryService(runtime, admin_identity="admin"))
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{server.server_port}"


def call(method, path, body=None, identity="admin"):
    request = urllib.request.Request(
        base + path,
        data=json.dumps(body).encode() if body is not None else None,
        method=method,
        headers={"Content-Type": "application/json", "X-Identity": identity},
    )
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read() or b"null")
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


# Admin wires up permissions; a non-admin attempt bounces with 403.
print(call("POST", "/permissions/grant", {"edge": {"user": "ana", "agent": "helper"}}, "bo")[0],
      "<- bo may not grant")
for edge in (
    {"user": "ana", "agent": "helper"},
    {"user": "bo", "agent": "helper"},
    {"agent": "helper", "resource": "kb"},
):
    status, body = call("POST", "/permissions/grant", {"edge": edge})
    print(status, "granted", edge, "at tick", body["tick"])

status, snap = call("GET", "/permissions/snapshot?user=ana")
print("ana's agents:", snap["agents"])

# ana runs an episode; bo reuses the shared memory it wrote.
status, first = call("POST", "/episodes", {"user": "ana", "query": "general: expense policy"}, "ana")
print("\nana episode:", status, first["final_answer"][:60], "...")
status, second = call("POST", "/episodes", {"user": "bo", "query": "general: expense policy"}, "bo")
print("bo episode :", status, "(same answer:", (second["final_answer"] == first["final_answer"]), ")")

# Direct read path, permission-checked per call.
status, view = call(
    "POST", "/memory/read", {"user": "bo", "agent": "helper", "query": "general: expense policy"}, "bo"
)
print("bo's view has", len(view["view"]), "fragments")
call("POST", "/permissions/revoke", {"edge": {"user": "bo", "agent": "helper"}})
status, _ = call(
    "POST", "/memory/read", {"user": "bo", "agent": "helper", "query": "general: expense policy"}, "bo"
)
print("after revoke, bo's read returns HTTP", status)

# The audit stream is line-delimited JSON with gap-free sequence numbers.
request = urllib.request.Request(base + "/audit?since_seq=0", headers={"X-Identity": "admin"})
with urllib.request.urlopen(request, timeout=10) as response:
    lines = response.read().decode().strip().splitlines()
print(f"\naudit stream: {len(lines)} records; last:", json.loads(lines[-1])["action"])

server.shutdown()
server.server_close()
