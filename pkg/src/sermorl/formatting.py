"""Byte-stable number rendering for CSV and text outputs."""


def fmt(x) -> str:
    """Round to 6 decimals, then drop trailing zeros: ``0.9``, ``-13.225``, ``0``."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if not isinstance(x, (int, float)) and hasattr(x, "item"):
        x = x.item()
    if not isinstance(x, (int, float)):
        return str(x)
    s = f"{float(x):.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def fmt_vec(v) -> str:
    return "(" + ", ".join(fmt(x) for x in v) + ")"
