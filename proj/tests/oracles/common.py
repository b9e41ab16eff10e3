import json
import os
import sys

FROZEN = os.path.join(os.path.dirname(os.path.abspath(__file__)), "frozen")


def emit(name, payload):
    """Write frozen/<name>.json, or with --check compare against it."""
    path = os.path.join(FROZEN, name + ".json")
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if "--check" in sys.argv:
        with open(path) as f:
            frozen = json.load(f)
        if not close(frozen, json.loads(text)):
            sys.exit(f"{name}: oracle output differs from the frozen file")
        print(f"{name}: ok")
        return
    with open(path, "w") as f:
        f.write(text)
    print(f"{name}: written")


def close(a, b, tol=1e-12):
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(close(a[k], b[k], tol) for k in a)
    if isinstance(a, list):
        return len(a) == len(b) and all(close(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, float) or isinstance(b, float):
        return abs(a - b) <= tol * max(1.0, abs(a))
    return a == b
