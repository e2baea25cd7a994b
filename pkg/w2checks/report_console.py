"""ANSI console summary report."""

G = '\033[92m'  # Green
Y = '\033[93m'  # Yellow
R = '\033[91m'  # Red
B = '\033[94m'  # Blue
C = '\033[96m'  # Cyan
D = '\033[2m'   # Dim
BD = '\033[1m'  # Bold
X = '\033[0m'   # Reset

WIDTH = 72


def _rule(left, fill, right):
    print(f"{B}{left}{fill * WIDTH}{right}{X}")


def _line(text, visible):
    print(f"{B}║{X}{text}{' ' * max(0, WIDTH - visible)}{B}║{X}")


def print_verdict(verdict, paths=None):
    """Print one experiment's verdict items as a boxed table."""
    print()
    _rule('╔', '═', '╗')
    title = f"  {verdict.kind.upper()} :: {verdict.name}"
    _line(f"{BD}{title}{X}", len(title))
    _rule('╠', '═', '╣')
    for item in verdict.items:
        mark = f"{C}·{X}" if item.diagnostic else (f"{G}✓{X}" if item.passed else f"{R}✗{X}")
        label = item.tag.ljust(22)
        numbers = f"residual {item.residual: .3e}  tol {item.tolerance:.1e}"
        if not item.expect_holds:
            numbers += "  (expected to fail)"
        elif item.diagnostic:
            numbers += "  (diagnostic)"
        color = G if item.passed else Y
        _line(f"  {mark}  {BD}{label}{X} {color}{numbers}{X}", 6 + len(label) + len(numbers))
    _rule('╠', '─', '╣')
    status = "PASS" if verdict.passed else "FAIL"
    _line(f"  {G if verdict.passed else R}{BD}{status}{X}", 2 + len(status))
    if paths:
        for key in sorted(paths):
            text = f"  {key}: {paths[key]}"
            _line(f"{D}{text[:WIDTH]}{X}", min(len(text), WIDTH))
    _rule('╚', '═', '╝')


def print_suite(report):
    print()
    _rule('╔', '═', '╗')
    title = f"  SUITE :: {report.directory}"
    _line(f"{BD}{title}{X}", len(title))
    _rule('╠', '═', '╣')
    if not report.entries:
        text = "  no experiment configs found"
        _line(f"{D}{text}{X}", len(text))
    for entry in report.entries:
        mark = f"{G}✓{X}" if entry.passed else f"{R}✗{X}"
        label = entry.file[:34].ljust(34)
        if entry.error:
            note = entry.error[:WIDTH - 42]
            color = R
        else:
            note = (entry.kind or "") + (f"  failed: {', '.join(entry.failed_tags)}" if entry.failed_tags else "")
            note = note[:WIDTH - 42]
            color = C if entry.passed else Y
        _line(f"  {mark}  {label} {color}{note}{X}", 6 + len(label) + len(note))
    _rule('╠', '─', '╣')
    passed = sum(1 for e in report.entries if e.passed)
    text = f"  {passed}/{len(report.entries)} passed"
    _line(f"{G if report.passed else R}{BD}{text}{X}", len(text))
    _rule('╚', '═', '╝')
