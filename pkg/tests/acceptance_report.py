"""Collects per-criterion outcomes so the run can end with one line per criterion."""

CRITERIA = {
    1: "metric-oracle equivalence",
    2: "FaDR algebra",
    3: "auFaDR bound",
    4: "gradient integrity",
    5: "partition exactness",
    6: "permutation-test soundness",
    7: "end-to-end debiasing",
    8: "genuine-score overlap preserved",
    9: "CLI determinism",
}

RESULTS: dict[int, list[tuple[str, bool, str]]] = {}


def record(number: int, label: str, ok: bool, detail: str) -> bool:
    RESULTS.setdefault(number, []).append((label, bool(ok), detail))
    return bool(ok)


def lines() -> list[str]:
    out = []
    for number, title in CRITERIA.items():
        checks = RESULTS.get(number)
        if not checks:
            out.append(f"criterion {number} ({title}): NOT RUN")
            continue
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        parts = "; ".join(f"{label}{'' if ok else ' [not met]'}: {detail}" for label, ok, detail in checks)
        out.append(f"criterion {number} ({title}): {status} | {parts}")
    return out
