#!/usr/bin/env python3
"""Starts `powerlab serve` and checks live responses against its own OpenAPI document.

usage: check_openapi.py <powerlab binary>
"""

import json
import socket
import subprocess
import sys
import tempfile
import time
import urllib.error
import urllib.request

import jsonschema
from openapi_spec_validator import validate
from referencing import Registry
from referencing.jsonschema import DRAFT202012

PREFIX = "/api/v1/"
COMPUTE = [
    "one_sample_t_test", "two_sample_t_test", "paired_t_test", "one_way_anova",
    "one_proportion_z_test", "two_proportions_z_test", "chi_square_test", "correlation_test",
    "mann_whitney", "paired_wilcoxon", "kruskal_wallis", "log_rank_test", "cox_ph",
]

failures = []


def check(ok, message):
    print(("ok   " if ok else "FAIL ") + message)
    if not ok:
        failures.append(message)


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def call(port, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(f"http://127.0.0.1:{port}{path}", data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=30) as r:
            return r.status, json.loads(r.read()), dict(r.headers)
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read()), dict(e.headers)


def main():
    binary = sys.argv[1]
    port = free_port()
    data_dir = tempfile.mkdtemp(prefix="powerlab-openapi-")
    server = subprocess.Popen([binary, "serve", "--port", str(port), "--data-dir", data_dir],
                              stderr=subprocess.PIPE)
    try:
        for _ in range(300):
            try:
                if call(port, "GET", PREFIX + "health")[0] == 200:
                    break
            except OSError:
                time.sleep(0.05)
        else:
            print("server did not start")
            return 1
        run(port)
    finally:
        server.terminate()
        server.wait(10)
    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


def run(port):
    status, doc, _ = call(port, "GET", PREFIX + "openapi.json")
    check(status == 200, "document is served")
    try:
        validate(doc)
        check(True, "document is valid OpenAPI " + doc.get("openapi", "?"))
    except Exception as e:  # noqa: BLE001
        check(False, f"document is valid OpenAPI: {e}")

    registry = Registry().with_resource("urn:powerlab", DRAFT202012.create_resource(doc))

    def validator(name):
        schema = {"$ref": f"urn:powerlab#/components/schemas/{name}"}
        return jsonschema.Draft202012Validator(schema, registry=registry)

    def conforms(instance, name, what):
        errors = sorted(validator(name).iter_errors(instance), key=str)
        check(not errors, f"{what} matches {name}" + (f": {errors[0].message}" if errors else ""))

    for name in COMPUTE:
        op = doc["paths"].get(PREFIX + name, {}).get("post")
        check(op is not None, f"{name} has a POST operation")
        if op is None:
            continue
        content = op["requestBody"]["content"]["application/json"]
        example = content["example"]
        request_schema = content["schema"]["$ref"].rsplit("/", 1)[1]
        conforms(example, request_schema, f"{name} example")
        status, body, headers = call(port, "POST", PREFIX + name, example)
        check(status == 200 and "X-Result-Id" in headers, f"{name} example answers 200 with a result id")
        conforms(body, "SolveResponse", f"{name} response")

        typo = dict(example)
        typo["alpah"] = 0.05
        errors = list(validator(request_schema).iter_errors(typo))
        check(bool(errors), f"{name} schema rejects a misspelled field")
        status, body, _ = call(port, "POST", PREFIX + name, typo)
        check(status == 400, f"{name} rejects a misspelled field")
        conforms(body, "ValidationError", f"{name} typo response")

        result_id = headers.get("X-Result-Id")
        if result_id:
            status, stored, _ = call(port, "GET", f"{PREFIX}results/{result_id}")
            check(status == 200, f"{name} result is retrievable")
            conforms(stored, "StoredResult", f"{name} stored result")

    status, health, _ = call(port, "GET", PREFIX + "health")
    conforms(health, "Health", "health")
    check(health.get("endpoints") == len(COMPUTE), "health counts every endpoint")

    status, session, headers = call(port, "POST", PREFIX + "sessions")
    check(status == 201, "session is created")
    conforms(session, "Session", "new session")
    for text in ["describe binary 2 groups", "set p0 0.18, p1 0.14, power 0.8", "solve n"]:
        status, reply, _ = call(port, "POST", f"{PREFIX}sessions/{session['id']}/command", {"text": text})
        check(status == 200, f"command '{text}'")
        conforms(reply, "CommandResponse", f"reply to '{text}'")
    check(reply.get("reply", {}).get("result", {}).get("n_per_arm") == [1318, 1318], "session solves 1318 per arm")

    status, body, _ = call(port, "POST", PREFIX + "two_proportions_z_test", {"p0": 0.5, "p1": 0.5000001, "power": 0.8})
    check(status == 422, "unreachable goal answers 422")
    conforms(body, "Problem", "unreachable response")


if __name__ == "__main__":
    sys.exit(main())
