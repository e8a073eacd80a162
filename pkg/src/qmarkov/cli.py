"""Batch experiment runner (placeholder; filled in below)."""

def main(argv=None):  # pragma: no cover
    raise SystemExit("not implemented yet")
