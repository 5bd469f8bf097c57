# Sandbox child: loads a candidate file and answers mask requests on stdin/stdout.
# Runs in its own interpreter; imports nothing from the host package.
import json
import sys


def main(path):
    with open(path, encoding="utf-8") as fh:
        source = fh.read()
    scope = {"__name__": "candidate"}
    exec(compile(source, "candidate.py", "exec"), scope)
    fn = scope.get("mask")
    if not callable(fn):
        print(json.dumps({"error": "candidate defines no mask function"}), flush=True)
        return 4
    instance = None
    for line in sys.stdin:
        msg = json.loads(line)
        if "init" in msg:
            instance = msg["init"]
            print(json.dumps({"ok": True}), flush=True)
            continue
        try:
            out = fn(msg["state"], msg["n"], instance)
            reply = {"mask": [bool(x) for x in out]}
        except Exception as exc:
            reply = {"error": f"{type(exc).__name__}: {exc}"}
        print(json.dumps(reply), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1]))
