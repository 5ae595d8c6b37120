"""Collects one pass/fail record per acceptance criterion."""

from __future__ import annotations

import time
from contextlib import contextmanager

RECORDS: dict = {}


@contextmanager
def criterion(num: int, title: str):
    """Record the outcome of the enclosed block as criterion ``num``.

    The yielded dict takes free-form ``detail`` text that is printed with
    the verdict; an exception marks the criterion failed and is re-raised.
    """
    rec = {"num": num, "title": title, "detail": "", "ok": False}
    t = time.perf_counter()
    try:
        yield rec
        rec["ok"] = True
    except BaseException as exc:
        msg = str(exc).strip().splitlines()
        rec["detail"] = (rec["detail"] + "; " if rec["detail"] else "") + (msg[0] if msg else type(exc).__name__)
        raise
    finally:
        rec["seconds"] = time.perf_counter() - t
        RECORDS[num] = rec
        print(line(rec))


def line(rec) -> str:
    verdict = "PASS" if rec["ok"] else "FAIL"
    return (f"criterion {rec['num']:2d} {verdict}  {rec['title']} ({rec['seconds']:.1f}s)"
            + (f": {rec['detail']}" if rec["detail"] else ""))
