"""Minimal runner for the effbench job protocol.

Usage: minimal_runner.py JOB.json

Loads the candidate, runs every case in order and prints one JSON record per
line. Not a sandbox: isolation is left to the harness (process group, memory
limit, hard kill).
"""
import json
import signal
import subprocess
import sys
import time


class SoftTimeout(Exception):
    pass


def _on_alarm(signum, frame):
    raise SoftTimeout()


def canonical(v):
    if isinstance(v, tuple):
        return [canonical(x) for x in v]
    if isinstance(v, list):
        return [canonical(x) for x in v]
    if isinstance(v, dict):
        return {str(k): canonical(x) for k, x in v.items()}
    return v


def tolerant_equal(a, b, eps):
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        if isinstance(a, int) and isinstance(b, int):
            return a == b
        return abs(a - b) <= eps * max(1.0, abs(b))
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(tolerant_equal(x, y, eps) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(tolerant_equal(a[k], b[k], eps) for k in a)
    return a == b


def exact_equal(a, b):
    if isinstance(a, bool) or isinstance(b, bool):
        return a is b
    if type(a) is not type(b) and not (isinstance(a, int) and isinstance(b, int)):
        return False
    if isinstance(a, list):
        return len(a) == len(b) and all(exact_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(exact_equal(a[k], b[k]) for k in a)
    return a == b


def check(checker, got, expected, case_input):
    if checker == "exact":
        return exact_equal(got, expected)
    if "float_tolerant" in checker:
        return tolerant_equal(got, expected, checker["float_tolerant"]["epsilon"])
    command = checker["custom"]["command"]
    payload = json.dumps({"input": case_input, "expected": expected, "actual": got})
    proc = subprocess.run(command, input=payload, text=True, capture_output=True)
    return proc.returncode == 0


def emit(case_id, status, timings, diagnostics="", output=None, with_output=False):
    rec = {"case_id": case_id, "status": status, "timings": timings, "diagnostics": diagnostics}
    if with_output:
        rec["output"] = output
    sys.stdout.write(json.dumps(rec) + "\n")
    sys.stdout.flush()


def timed_call(fn, args, limit):
    signal.setitimer(signal.ITIMER_REAL, limit)
    try:
        start = time.perf_counter()
        result = fn(*args)
        elapsed = time.perf_counter() - start
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
    return result, elapsed


def main():
    if hasattr(sys, "set_int_max_str_digits"):
        sys.set_int_max_str_digits(0)
    sys.setrecursionlimit(100000)
    with open(sys.argv[1]) as fh:
        job = json.load(fh)
    signal.signal(signal.SIGALRM, _on_alarm)
    limit = job["soft_limit_s"]
    repeats = job["repeats"]
    expected = job.get("expected_outputs")
    capture = expected is None

    namespace = {"__name__": "candidate"}
    try:
        exec(compile(job["candidate_source"], "<candidate>", "exec"), namespace)
    except BaseException as exc:  # noqa: BLE001 - any load failure is the candidate's
        for case in job["cases"]:
            emit(case["case_id"], "runtime_error", [], f"load failed: {exc!r}")
        return 0
    fn = namespace.get(job["entry_point"])
    if not callable(fn):
        for case in job["cases"]:
            emit(case["case_id"], "runtime_error", [], f"entry point {job['entry_point']!r} not defined")
        return 0

    for i, case in enumerate(job["cases"]):
        cid = case["case_id"]
        args = case["input"]
        timings = []
        try:
            out, t = timed_call(fn, args, limit)
            out = canonical(out)
            timings.append(t)
            if t >= limit:
                raise SoftTimeout()
            try:
                json.dumps(out, allow_nan=False)
            except (TypeError, ValueError) as exc:
                emit(cid, "wrong_output", timings, f"unencodable output: {exc}")
                continue
            if not capture and not check(job["checker"], out, expected[i], args):
                emit(cid, "wrong_output", timings, f"got {json.dumps(out)[:200]}")
                continue
            for _ in range(repeats - 1):
                _, t = timed_call(fn, args, limit)
                timings.append(t)
                if t >= limit:
                    raise SoftTimeout()
        except SoftTimeout:
            if not timings or timings[-1] < limit:
                timings.append(limit)
            emit(cid, "timeout", timings[-repeats:], "soft limit reached")
            continue
        except BaseException as exc:  # noqa: BLE001
            emit(cid, "runtime_error", timings, repr(exc)[:500])
            continue
        emit(cid, "ok", timings, output=out, with_output=capture)
    return 0


if __name__ == "__main__":
    sys.exit(main())
