"""Collects one verdict line per acceptance criterion for the terminal summary."""
import contextlib

RESULTS = {}


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record PASS or FAIL for ``number``; failures still propagate."""
    note = []
    try:
        yield note
    except BaseException as exc:
        RESULTS[number] = f"criterion {number:2d} FAIL  {title}: {type(exc).__name__} {exc}".splitlines()[0]
        raise
    detail = f" ({'; '.join(note)})" if note else ""
    RESULTS[number] = f"criterion {number:2d} PASS  {title}{detail}"
