"""Command line: ``issma run`` and ``issma validate``.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical or
runtime failures during an experiment.
"""

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
import traceback

import numpy as np

from . import __version__
from .config import config_hash, dump, load_config
from .errors import ConfigError, IssmaError

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parser():
    p = argparse.ArgumentParser(prog="issma", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (repeatable)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--out", default=None, metavar="PATH")

    r = sub.add_parser("run", help="run an experiment")
    common(r)
    r.add_argument("--no-plot", action="store_true", help="skip the PNG figure")
    v = sub.add_parser("validate", help="print the resolved config without running")
    common(v)
    return p


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(cols, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _sidecar_path(out):
    return os.path.splitext(out)[0] + ".json"


def _figure_path(out):
    return os.path.splitext(out)[0] + ".png"


def _where(exc):
    tb = traceback.extract_tb(exc.__traceback__)
    mods = [os.path.splitext(os.path.basename(f.filename))[0] for f in tb if "issma" in f.filename]
    return mods[-1] if mods else "issma"


def cmd_validate(args):
    cfg = load_config(args.config, args.set, args.seed, args.workers, args.out)
    sys.stdout.write(dump(cfg))
    return 0


def cmd_run(args):
    from .experiments import EXPERIMENTS

    cfg = load_config(args.config, args.set, args.seed, args.workers, args.out)
    out = cfg["output"]
    t0 = time.time()
    try:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            cols, rows, extra = EXPERIMENTS[cfg["experiment"]](cfg)
    except (IssmaError, ArithmeticError, np.linalg.LinAlgError, ValueError, MemoryError) as exc:
        print(f"error [{_where(exc)}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    elapsed = time.time() - t0
    _atomic_write(out, csv_text(cols, rows))
    meta = {
        "experiment": cfg["experiment"],
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "version": __version__,
        "elapsed_seconds": elapsed,
        "columns": cols,
        "results": extra,
    }
    _atomic_write(_sidecar_path(out), json.dumps(meta, indent=2, default=_fmt) + "\n")
    if not args.no_plot:
        from .plotting import render
        render(cfg["experiment"], cols, rows, _figure_path(out))
    print(f"wrote {out} ({len(rows)} rows) in {elapsed:.1f} s")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return {"run": cmd_run, "validate": cmd_validate}[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc.field}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
