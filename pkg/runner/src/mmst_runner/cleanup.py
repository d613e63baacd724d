"""Dead-code removal for solution artifacts via syntax-tree analysis.

Removes unused imports and unused simple assignments whose right-hand side
cannot have side effects, by deleting whole source lines so the surviving
code keeps its original formatting (already-clean code echoes byte for
byte). Removal repeats to a fixpoint: dropping `b = a + 1` can orphan `a`.
"""

from __future__ import annotations

import ast

MAX_PASSES = 50

_PURE_LEAVES = (ast.Constant, ast.Name)


def _is_pure(node: ast.expr) -> bool:
    """True when evaluating the expression cannot run arbitrary code."""
    if isinstance(node, _PURE_LEAVES):
        return True
    if isinstance(node, (ast.Tuple, ast.List, ast.Set)):
        return all(_is_pure(e) for e in node.elts)
    if isinstance(node, ast.Dict):
        return all(k is not None and _is_pure(k) for k in node.keys) and all(
            _is_pure(v) for v in node.values
        )
    if isinstance(node, ast.UnaryOp):
        return _is_pure(node.operand)
    if isinstance(node, ast.BinOp):
        return _is_pure(node.left) and _is_pure(node.right)
    if isinstance(node, ast.BoolOp):
        return all(_is_pure(v) for v in node.values)
    if isinstance(node, ast.Compare):
        return _is_pure(node.left) and all(_is_pure(c) for c in node.comparators)
    return False


def _used_names(tree: ast.Module) -> set[str]:
    used: set[str] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Load, ast.Del)):
            used.add(node.id)
        elif isinstance(node, ast.AugAssign) and isinstance(node.target, ast.Name):
            used.add(node.target.id)
        elif isinstance(node, (ast.Global, ast.Nonlocal)):
            used.update(node.names)
    return used


def _bound_names(stmt: ast.stmt) -> list[str] | None:
    """Names a candidate statement binds, or None if it is not a candidate."""
    if isinstance(stmt, ast.Import):
        return [(alias.asname or alias.name.split(".")[0]) for alias in stmt.names]
    if isinstance(stmt, ast.ImportFrom):
        if any(alias.name == "*" for alias in stmt.names):
            return None
        return [(alias.asname or alias.name) for alias in stmt.names]
    if isinstance(stmt, ast.Assign):
        if len(stmt.targets) == 1 and isinstance(stmt.targets[0], ast.Name) and _is_pure(stmt.value):
            return [stmt.targets[0].id]
        return None
    if isinstance(stmt, ast.AnnAssign):
        if (
            isinstance(stmt.target, ast.Name)
            and (stmt.value is None or _is_pure(stmt.value))
        ):
            return [stmt.target.id]
        return None
    return None


def _blocks(tree: ast.Module):
    for node in ast.walk(tree):
        for attr in ("body", "orelse", "finalbody"):
            block = getattr(node, attr, None)
            if isinstance(block, list) and block and isinstance(block[0], ast.stmt):
                yield block


def _line_span(stmt: ast.stmt) -> set[int]:
    return set(range(stmt.lineno, (stmt.end_lineno or stmt.lineno) + 1))


def _remove_pass(source: str) -> str:
    tree = ast.parse(source)
    used = _used_names(tree)

    all_statements = [n for n in ast.walk(tree) if isinstance(n, ast.stmt)]
    doomed: list[ast.stmt] = []
    doomed_lines: set[int] = set()
    for block in _blocks(tree):
        survivors = len(block)
        for stmt in block:
            if survivors <= 1:
                break  # never empty a block
            bound = _bound_names(stmt)
            if not bound or any(name in used for name in bound):
                continue
            span = _line_span(stmt)
            shared = any(
                other is not stmt
                and not _is_descendant(stmt, other)  # nested inside the candidate
                and not _is_descendant(other, stmt)  # candidate nested inside other
                and not span.isdisjoint(_line_span(other))
                for other in all_statements
            )
            if shared:
                continue
            doomed.append(stmt)
            doomed_lines |= span
            survivors -= 1

    if not doomed:
        return source
    lines = source.split("\n")
    kept = [line for number, line in enumerate(lines, start=1) if number not in doomed_lines]
    return "\n".join(kept)


def _is_descendant(ancestor: ast.stmt, node: ast.stmt) -> bool:
    return any(node is child for child in ast.walk(ancestor))


def clean_source(source: str) -> str:
    """Iteratively strip unused imports and side-effect-free unused
    assignments; returns the input unchanged when nothing is removable.

    Raises SyntaxError when the source does not parse.
    """
    ast.parse(source)  # surface syntax errors before any edit
    current = source
    for _ in range(MAX_PASSES):
        reduced = _remove_pass(current)
        if reduced == current:
            return current
        try:
            ast.parse(reduced)
        except SyntaxError:  # line surgery went wrong; keep the safe version
            return current
        current = reduced
    return current
