"""Deterministic synthetic IR corpus for pipeline checks.

Twenty structurally distinct tasks, each emitted in a clean register
style ("source" origin) and a stack-slot heavy style with numbered
registers ("binary" origin), across two language flavors that differ in
symbol naming. Variants of one task differ by padding instructions and
non-entry block order, so matching pairs are similar but not identical.

Layout written under the output root: <task>/<origin>/<lang>/v<k>.ll
"""

import os
import random
import re
from typing import Callable, Dict, List, Sequence, Tuple

from .dataset import ORIGIN_BINARY, ORIGIN_SOURCE

# (label, lines) per block; lines carry no trailing newline.
Block = Tuple[str, List[str]]
# (base name, param list text, blocks)
FunctionSpec = Tuple[str, str, List[Block]]

_ID_TAIL = r"(?![-a-zA-Z$._0-9])"

LANGS = ("cpp", "java")
# one variant per (task, origin, lang) keeps a default training run
# inside a single-CPU time budget; pass more for a larger corpus
VARIANTS_PER_CELL = 1


def _loop_reduce(body_lines: List[str], acc_src: str) -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", ["br label %loop"]),
        ("loop", [
            "%i = phi i32 [ 0, %entry ], [ %i.next, %loop ]",
            "%acc = phi i32 [ 0, %entry ], [ %acc.next, %loop ]",
        ] + body_lines + [
            "%acc.next = " + acc_src,
            "%i.next = add i32 %i, 1",
            "%cond = icmp slt i32 %i.next, %a",
            "br i1 %cond, label %loop, label %done",
        ]),
        ("done", ["ret i32 %acc.next"]),
    ])]


def _loop_sum() -> List[FunctionSpec]:
    return _loop_reduce([], "add i32 %acc, %i")


def _loop_square() -> List[FunctionSpec]:
    return _loop_reduce(["%isq = mul i32 %i, %i"], "add i32 %acc, %isq")


def _loop_xor() -> List[FunctionSpec]:
    return _loop_reduce(["%sh = shl i32 %i, 1"], "xor i32 %acc, %sh")


def _branch_abs() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%neg = icmp slt i32 %a, 0",
            "br i1 %neg, label %flip, label %keep",
        ]),
        ("flip", ["%negv = sub i32 0, %a", "br label %join"]),
        ("keep", ["%posv = add i32 %a, 0", "br label %join"]),
        ("join", [
            "%res = phi i32 [ %negv, %flip ], [ %posv, %keep ]",
            "ret i32 %res",
        ]),
    ])]


def _branch_sign() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%isneg = icmp slt i32 %a, 0",
            "br i1 %isneg, label %minus, label %check",
        ]),
        ("check", [
            "%iszero = icmp eq i32 %a, 0",
            "br i1 %iszero, label %none, label %plus",
        ]),
        ("minus", ["%mv = sub i32 0, 1", "br label %join"]),
        ("none", ["%zv = add i32 0, 0", "br label %join"]),
        ("plus", ["%pv = add i32 0, 1", "br label %join"]),
        ("join", [
            "%res = phi i32 [ %mv, %minus ], [ %zv, %none ], [ %pv, %plus ]",
            "ret i32 %res",
        ]),
    ])]


def _switch_cases(arms: List[Tuple[int, str]]) -> List[FunctionSpec]:
    table = " ".join("i32 %d, label %%c%d" % (val, k)
                     for k, (val, _) in enumerate(arms))
    blocks: List[Block] = [
        ("entry", ["switch i32 %a, label %other [ " + table + " ]"])]
    phi_bits = []
    for k, (_, op) in enumerate(arms):
        blocks.append(("c%d" % k, ["%%r%d = %s" % (k, op), "br label %join"]))
        phi_bits.append("[ %%r%d, %%c%d ]" % (k, k))
    blocks.append(("other", ["%rx = sub i32 %a, 1", "br label %join"]))
    phi_bits.append("[ %rx, %other ]")
    blocks.append(("join", [
        "%res = phi i32 " + ", ".join(phi_bits), "ret i32 %res"]))
    return [("task", "i32 %a, i32 %b", blocks)]


def _switch_case() -> List[FunctionSpec]:
    return _switch_cases([(0, "mul i32 %a, 3"), (1, "add i32 %a, 7"),
                          (2, "shl i32 %a, 2")])


def _switch_five() -> List[FunctionSpec]:
    return _switch_cases([(10, "add i32 %a, 11"), (20, "mul i32 %a, 5"),
                          (30, "and i32 %a, 15"), (40, "or i32 %a, 64"),
                          (50, "xor i32 %a, 9")])


def _nested_loop() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", ["br label %outer"]),
        ("outer", [
            "%i = phi i32 [ 0, %entry ], [ %i.next, %latch ]",
            "%acc.o = phi i32 [ 0, %entry ], [ %acc.i, %latch ]",
            "br label %inner",
        ]),
        ("inner", [
            "%j = phi i32 [ 0, %outer ], [ %j.next, %inner ]",
            "%acc = phi i32 [ %acc.o, %outer ], [ %acc.n, %inner ]",
            "%p = mul i32 %i, %j",
            "%acc.n = add i32 %acc, %p",
            "%j.next = add i32 %j, 1",
            "%jc = icmp slt i32 %j.next, %b",
            "br i1 %jc, label %inner, label %latch",
        ]),
        ("latch", [
            "%acc.i = phi i32 [ %acc.n, %inner ]",
            "%i.next = add i32 %i, 1",
            "%ic = icmp slt i32 %i.next, %a",
            "br i1 %ic, label %outer, label %done",
        ]),
        ("done", ["ret i32 %acc.i"]),
    ])]


def _nested_triangle() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", ["br label %outer"]),
        ("outer", [
            "%i = phi i32 [ 1, %entry ], [ %i.next, %latch ]",
            "%t.o = phi i32 [ 0, %entry ], [ %t.i, %latch ]",
            "br label %inner",
        ]),
        ("inner", [
            "%j = phi i32 [ 0, %outer ], [ %j.next, %inner ]",
            "%t = phi i32 [ %t.o, %outer ], [ %t.n, %inner ]",
            "%t.n = add i32 %t, %j",
            "%j.next = add i32 %j, 1",
            "%jc = icmp sle i32 %j.next, %i",
            "br i1 %jc, label %inner, label %latch",
        ]),
        ("latch", [
            "%t.i = phi i32 [ %t.n, %inner ]",
            "%i.next = add i32 %i, 1",
            "%ic = icmp sle i32 %i.next, %a",
            "br i1 %ic, label %outer, label %done",
        ]),
        ("done", ["ret i32 %t.i"]),
    ])]


def _array_max() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%buf = alloca [4 x i32], align 4",
            "%q0 = getelementptr inbounds [4 x i32], [4 x i32]* %buf, "
            "i64 0, i64 0",
            "store i32 %a, i32* %q0, align 4",
            "br label %scan",
        ]),
        ("scan", [
            "%i = phi i64 [ 0, %entry ], [ %i.next, %scan ]",
            "%best = phi i32 [ %b, %entry ], [ %best.next, %scan ]",
            "%qi = getelementptr inbounds [4 x i32], [4 x i32]* %buf, "
            "i64 0, i64 %i",
            "%v = load i32, i32* %qi, align 4",
            "%gt = icmp sgt i32 %v, %best",
            "%best.next = select i1 %gt, i32 %v, i32 %best",
            "%i.next = add i64 %i, 1",
            "%c = icmp ult i64 %i.next, 4",
            "br i1 %c, label %scan, label %done",
        ]),
        ("done", ["ret i32 %best.next"]),
    ])]


def _array_sum() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%buf = alloca [8 x i32], align 4",
            "%p0 = getelementptr inbounds [8 x i32], [8 x i32]* %buf, "
            "i64 0, i64 0",
            "store i32 %a, i32* %p0, align 4",
            "%p1 = getelementptr inbounds [8 x i32], [8 x i32]* %buf, "
            "i64 0, i64 1",
            "store i32 %b, i32* %p1, align 4",
            "br label %loop",
        ]),
        ("loop", [
            "%i = phi i64 [ 0, %entry ], [ %i.next, %loop ]",
            "%s = phi i32 [ 0, %entry ], [ %s.next, %loop ]",
            "%pi = getelementptr inbounds [8 x i32], [8 x i32]* %buf, "
            "i64 0, i64 %i",
            "%v = load i32, i32* %pi, align 4",
            "%s.next = add i32 %s, %v",
            "%i.next = add i64 %i, 1",
            "%c = icmp ult i64 %i.next, 2",
            "br i1 %c, label %loop, label %done",
        ]),
        ("done", ["ret i32 %s.next"]),
    ])]


def _call_pair() -> List[FunctionSpec]:
    return [
        ("helper", "i32 %x", [
            ("entry", ["%sq = mul i32 %x, %x", "ret i32 %sq"]),
        ]),
        ("task", "i32 %a, i32 %b", [
            ("entry", [
                "%u = call i32 @helper(i32 %a)",
                "%v = call i32 @helper(i32 %b)",
                "%s = add i32 %u, %v",
                "ret i32 %s",
            ]),
        ]),
    ]


def _call_chain() -> List[FunctionSpec]:
    return [
        ("shiftup", "i32 %x", [
            ("entry", ["%w = shl i32 %x, 3", "ret i32 %w"]),
        ]),
        ("helper", "i32 %x", [
            ("entry", [
                "%h = call i32 @shiftup(i32 %x)",
                "%h2 = add i32 %h, 13",
                "ret i32 %h2",
            ]),
        ]),
        ("task", "i32 %a, i32 %b", [
            ("entry", [
                "%u = call i32 @helper(i32 %a)",
                "%s = sub i32 %u, %b",
                "ret i32 %s",
            ]),
        ]),
    ]


def _select_chain() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%c1 = icmp sgt i32 %a, 100",
            "%t1 = select i1 %c1, i32 100, i32 %a",
            "%c2 = icmp slt i32 %t1, 0",
            "%t2 = select i1 %c2, i32 0, i32 %t1",
            "%c3 = icmp eq i32 %t2, 50",
            "%t3 = select i1 %c3, i32 49, i32 %t2",
            "ret i32 %t3",
        ]),
    ])]


def _select_parity() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%bit = and i32 %a, 1",
            "%odd = icmp ne i32 %bit, 0",
            "%up = add i32 %a, %b",
            "%down = sub i32 %a, %b",
            "%res = select i1 %odd, i32 %up, i32 %down",
            "ret i32 %res",
        ]),
    ])]


def _float_mix() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%x = sitofp i32 %a to double",
            "%y = fmul double %x, 2.5",
            "%z = fadd double %y, 1.0e1",
            "%c = fcmp ogt double %z, 5.0e1",
            "%w = select i1 %c, double %z, double 5.0e1",
            "%r = fptosi double %w to i32",
            "ret i32 %r",
        ]),
    ])]


def _float_div() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%x = sitofp i32 %a to double",
            "%y = sitofp i32 %b to double",
            "%q = fdiv double %x, 4.0",
            "%d = fsub double %q, %y",
            "%lt = fcmp olt double %d, 0.0",
            "br i1 %lt, label %under, label %done",
        ]),
        ("under", [
            "%neg = fsub double 0.0, %d",
            "br label %done",
        ]),
        ("done", [
            "%m = phi double [ %neg, %under ], [ %d, %entry ]",
            "%r = fptosi double %m to i32",
            "ret i32 %r",
        ]),
    ])]


def _shift_mask() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%s1 = shl i32 %a, 4",
            "%m1 = and i32 %s1, 65280",
            "%s2 = lshr i32 %b, 2",
            "%m2 = or i32 %m1, %s2",
            "%f = xor i32 %m2, 21845",
            "ret i32 %f",
        ]),
    ])]


def _struct_fields() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", [
            "%box = alloca { i32, i32 }, align 8",
            "%f0 = getelementptr inbounds { i32, i32 }, "
            "{ i32, i32 }* %box, i32 0, i32 0",
            "store i32 %a, i32* %f0, align 8",
            "%f1 = getelementptr inbounds { i32, i32 }, "
            "{ i32, i32 }* %box, i32 0, i32 1",
            "store i32 %b, i32* %f1, align 4",
            "%v0 = load i32, i32* %f0, align 8",
            "%v1 = load i32, i32* %f1, align 4",
            "%s = mul i32 %v0, %v1",
            "ret i32 %s",
        ]),
    ])]


def _rem_loop() -> List[FunctionSpec]:
    return [("task", "i32 %a, i32 %b", [
        ("entry", ["br label %loop"]),
        ("loop", [
            "%n = phi i32 [ %a, %entry ], [ %n.next, %loop ]",
            "%digits = phi i32 [ 0, %entry ], [ %d.next, %loop ]",
            "%rem = srem i32 %n, 10",
            "%d.next = add i32 %digits, %rem",
            "%n.next = sdiv i32 %n, 10",
            "%more = icmp sgt i32 %n.next, 0",
            "br i1 %more, label %loop, label %done",
        ]),
        ("done", ["ret i32 %d.next"]),
    ])]


TASKS: Dict[str, Callable[[], List[FunctionSpec]]] = {
    "loop_sum": _loop_sum,
    "loop_square": _loop_square,
    "loop_xor": _loop_xor,
    "branch_abs": _branch_abs,
    "branch_sign": _branch_sign,
    "switch_case": _switch_case,
    "switch_five": _switch_five,
    "nested_loop": _nested_loop,
    "nested_triangle": _nested_triangle,
    "array_sum": _array_sum,
    "array_max": _array_max,
    "call_pair": _call_pair,
    "call_chain": _call_chain,
    "select_chain": _select_chain,
    "select_parity": _select_parity,
    "float_mix": _float_mix,
    "float_div": _float_div,
    "shift_mask": _shift_mask,
    "struct_fields": _struct_fields,
    "rem_loop": _rem_loop,
}


def _replace_id(text: str, old: str, new: str) -> str:
    return re.sub(re.escape(old) + _ID_TAIL, new, text)


def _pad_lines(rng: random.Random, count: int) -> List[str]:
    lines = []
    prev = "%b"
    for i in range(count):
        name = "%%pad%d" % i
        lines.append("  %s = add i32 %s, %d" % (name, prev, rng.randint(1, 9)))
        prev = name
    return lines


def _stacky_prologue() -> List[str]:
    return [
        "  %sa = alloca i32, align 4",
        "  store i32 %a, i32* %sa, align 4",
        "  %a9 = load i32, i32* %sa, align 4",
    ]


def _mangle(base: str, task: str, lang: str) -> str:
    stem = task if base == "task" else base
    if lang == "cpp":
        return "_Z%d%sii" % (len(stem), stem)
    return "j_" + stem


def _number_registers(lines: List[str], params: Sequence[str]) -> List[str]:
    """Rename named value registers to %1, %2, ... in definition order.
    Labels keep their names so branch targets stay readable."""
    mapping: Dict[str, str] = {}
    counter = [1]

    def assign(name: str) -> None:
        if name not in mapping:
            mapping[name] = "%%%d" % counter[0]
            counter[0] += 1

    for p in params:
        assign(p)
    for line in lines:
        m = re.match(r"\s*(%[-a-zA-Z$._][-a-zA-Z$._0-9]*) =", line)
        if m:
            assign(m.group(1))

    def sub(match: "re.Match[str]") -> str:
        return mapping.get(match.group(0), match.group(0))

    pattern = re.compile(r"%[-a-zA-Z$._][-a-zA-Z$._0-9]*" + _ID_TAIL)
    return [pattern.sub(sub, line) for line in lines]


def render_file(task: str, origin: str, lang: str, variant: int,
                seed: int) -> str:
    rng = random.Random("%d:%s:%s:%s:%d" % (seed, task, origin, lang, variant))
    specs = TASKS[task]()
    stacky = origin == ORIGIN_BINARY
    chunks = []
    for base, params, blocks in specs:
        blocks = [(label, list(lines)) for label, lines in blocks]
        if len(blocks) > 1 and (stacky or variant > 0):
            tail = blocks[1:]
            rng.shuffle(tail)
            blocks = blocks[:1] + tail

        body: List[str] = []
        for bi, (label, lines) in enumerate(blocks):
            if bi > 0:
                body.append("%s:" % label)
            if bi == 0 and base == "task":
                # small ranges: pads separate origins without drowning the
                # task body in shared add-chain noise
                pad = rng.randint(1, 2) if stacky else rng.randint(0, 1)
                body.extend(_pad_lines(rng, pad))
            body.extend("  " + ln for ln in lines)
        if stacky and base == "task":
            body = [_replace_id(ln, "%a", "%a9") for ln in body]
            body = _stacky_prologue() + body

        if stacky:
            params_named = re.findall(
                r"%[-a-zA-Z$._][-a-zA-Z$._0-9]*", params)
            body = _number_registers(body, params_named)
            # param names change too, so rewrite the signature to match
            new_params = params
            for i, p in enumerate(params_named, start=1):
                new_params = _replace_id(new_params, p, "%%%d" % i)
            params = new_params

        name = _mangle(base, task, lang)
        header = "define i32 @%s(%s) {" % (name, params)
        chunks.append("\n".join([header] + body + ["}"]))

    text = "\n\n".join(chunks) + "\n"
    for base, _, _ in specs:
        text = _replace_id(text, "@" + base, "@" + _mangle(base, task, lang))
    return text


def generate_corpus(root: str, seed: int,
                    langs: Sequence[str] = LANGS,
                    variants: int = VARIANTS_PER_CELL) -> List[str]:
    written = []
    for task in sorted(TASKS):
        for origin in (ORIGIN_SOURCE, ORIGIN_BINARY):
            for lang in langs:
                out_dir = os.path.join(root, task, origin, lang)
                os.makedirs(out_dir, exist_ok=True)
                for k in range(variants):
                    path = os.path.join(out_dir, "v%d.ll" % k)
                    with open(path, "w", encoding="utf-8") as fh:
                        fh.write(render_file(task, origin, lang, k, seed))
                    written.append(path)
    return written
