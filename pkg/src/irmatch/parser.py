"""Tolerant parser for textual LLVM IR.

Reads .ll text into modules, functions, basic blocks, and instructions.
The goal is not a validating frontend: unknown constructs degrade to a
generic operand scan instead of failing, comments and metadata are
stripped, and blocks missing an explicit label get a synthetic one.
"""

import re
from dataclasses import dataclass, field
from typing import List, Optional

from .errors import MalformedModule

ID_RE = re.compile(r'[%@](?:"[^"]*"|[-a-zA-Z$._][-a-zA-Z$._0-9]*|\d+)')
INT_RE = re.compile(r'-?\d+$')
FLOAT_RE = re.compile(r'(?:-?\d+\.\d+(?:[eE][+-]?\d+)?|0x[0-9A-Fa-f]+)$')
LABEL_LINE_RE = re.compile(r'^((?:"[^"]*")|[-a-zA-Z$._0-9]+):\s*$')
METADATA_RE = re.compile(r',?\s*![-a-zA-Z$._0-9]+(?:\s+!(?:\d+|\{[^}]*\}))?')
ATTR_REF_RE = re.compile(r'\s#\d+\b')

KEYWORD_LITERALS = {"true", "false", "null", "undef", "poison", "none", "zeroinitializer"}

# segments that carry qualifiers, never values
SKIP_SEGMENT_WORDS = {"align", "addrspace", "syncscope"}

TERMINATORS = {"ret", "br", "switch", "unreachable", "invoke", "resume"}

BINARY_OPS = {
    "add", "fadd", "sub", "fsub", "mul", "fmul", "udiv", "sdiv", "fdiv",
    "urem", "srem", "frem", "shl", "lshr", "ashr", "and", "or", "xor",
}
CAST_OPS = {
    "trunc", "zext", "sext", "fptrunc", "fpext", "fptoui", "fptosi",
    "uitofp", "sitofp", "ptrtoint", "inttoptr", "bitcast", "addrspacecast",
}


@dataclass
class Operand:
    """A value operand: an SSA/global identifier or a literal constant."""
    text: str
    is_id: bool
    position: int = -1


@dataclass
class IrInstruction:
    opcode: str
    full_text: str
    result: Optional[str] = None
    operands: List[Operand] = field(default_factory=list)
    callee: Optional[str] = None
    result_type: str = "var"
    successors: List[str] = field(default_factory=list)

    @property
    def operand_ids(self) -> List[str]:
        return [op.text for op in self.operands if op.is_id]

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS


@dataclass
class IrBlock:
    label: str
    instructions: List[IrInstruction] = field(default_factory=list)


@dataclass
class IrFunction:
    name: str
    params: List[str] = field(default_factory=list)
    param_types: List[str] = field(default_factory=list)
    return_type: str = "void"
    blocks: List[IrBlock] = field(default_factory=list)
    is_declaration: bool = False


@dataclass
class IrModule:
    functions: List[IrFunction] = field(default_factory=list)
    source_path: Optional[str] = None

    def defined_functions(self) -> List[IrFunction]:
        return [f for f in self.functions if not f.is_declaration]


def strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == ";" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def clean_text(text: str) -> str:
    """Drop metadata attachments and attribute references, collapse spaces."""
    text = METADATA_RE.sub("", text)
    text = ATTR_REF_RE.sub("", text)
    return " ".join(text.split())


def split_top(text: str, sep: str = ",") -> List[str]:
    """Split on sep at bracket depth zero, respecting quotes."""
    parts: List[str] = []
    buf: List[str] = []
    depth = 0
    in_str = False
    for ch in text:
        if ch == '"':
            in_str = not in_str
        if not in_str:
            if ch in "([{<":
                depth += 1
            elif ch in ")]}>":
                depth -= 1
            elif ch == sep and depth == 0:
                parts.append("".join(buf))
                buf = []
                continue
        buf.append(ch)
    parts.append("".join(buf))
    return [p.strip() for p in parts if p.strip()]


def _tokens_top(text: str) -> List[str]:
    """Whitespace tokens at bracket depth zero; bracketed groups stay whole."""
    toks: List[str] = []
    buf: List[str] = []
    depth = 0
    in_str = False
    for ch in text:
        if ch == '"':
            in_str = not in_str
        if not in_str:
            if ch in "([{<":
                depth += 1
            elif ch in ")]}>":
                depth -= 1
            if ch.isspace() and depth == 0:
                if buf:
                    toks.append("".join(buf))
                    buf = []
                continue
        buf.append(ch)
    if buf:
        toks.append("".join(buf))
    return toks


def _classify(token: str) -> Optional[Operand]:
    if ID_RE.fullmatch(token):
        return Operand(token, True)
    if token in KEYWORD_LITERALS or INT_RE.match(token) or FLOAT_RE.match(token):
        return Operand(token, False)
    if token and token[0] in "([{":
        # constant expression: the dependence is on the identifier inside
        m = ID_RE.search(token)
        if m:
            return Operand(m.group(0), True)
    return None


def segment_value(segment: str) -> Optional[Operand]:
    """Pull the value out of a segment like 'i32 %15' or 'nsw i32 7'."""
    toks = _tokens_top(segment)
    if not toks or toks[0] in SKIP_SEGMENT_WORDS or toks[0] == "label":
        return None
    if toks[-1] == "...":
        return None
    return _classify(toks[-1])


def _label_name(token: str) -> str:
    return token[1:] if token.startswith("%") else token


def _first_type(segment: str) -> str:
    for tok in _tokens_top(segment):
        if tok in ("volatile", "atomic"):
            continue
        return tok
    return "var"


def _parse_call_tail(rest: str):
    """Split '<ty> <callee>(<args>)' into callee, arg operands, return type."""
    depth = 0
    in_str = False
    open_idx = close_idx = -1
    for i, ch in enumerate(rest):
        if ch == '"':
            in_str = not in_str
        if in_str:
            continue
        if ch == "(":
            if depth == 0:
                open_idx = i
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                close_idx = i
    if open_idx < 0 or close_idx < open_idx:
        return None, [], "var"
    # the last top-level paren group is the argument list
    last_open = open_idx
    depth = 0
    in_str = False
    for i, ch in enumerate(rest[:close_idx]):
        if ch == '"':
            in_str = not in_str
        if in_str:
            continue
        if ch == "(":
            if depth == 0:
                last_open = i
            depth += 1
        elif ch == ")":
            depth -= 1
    head = rest[:last_open]
    args = rest[last_open + 1:close_idx]
    ids = list(ID_RE.finditer(head))
    callee = ids[-1].group(0) if ids else None
    head_toks = _tokens_top(head[: ids[-1].start()] if ids else head)
    plain = [t for t in head_toks if not t.startswith("(")]
    rtype = plain[-1] if plain else "var"
    ops = []
    for seg in split_top(args):
        op = segment_value(seg)
        if op is not None:
            ops.append(op)
    return callee, ops, rtype


def parse_instruction(text: str) -> IrInstruction:
    full = clean_text(text)
    rest = full
    result = None
    m = re.match(r'^([%@](?:"[^"]*"|[-a-zA-Z$._0-9]+))\s*=\s*', rest)
    if m:
        result = m.group(1)
        rest = rest[m.end():]
    for prefix in ("tail ", "musttail ", "notail "):
        if rest.startswith(prefix):
            rest = rest[len(prefix):]
    toks = rest.split(None, 1)
    opcode = toks[0] if toks else ""
    body = toks[1] if len(toks) > 1 else ""
    instr = IrInstruction(opcode=opcode, full_text=full, result=result)

    ops: List[Operand] = []
    if opcode == "ret":
        if body and body != "void":
            op = segment_value(body)
            if op:
                ops.append(op)
    elif opcode == "br":
        for seg in split_top(body):
            seg_toks = _tokens_top(seg)
            if seg_toks and seg_toks[0] == "label":
                instr.successors.append(_label_name(seg_toks[-1]))
            else:
                op = segment_value(seg)
                if op:
                    ops.append(op)
    elif opcode == "switch":
        ops, instr.successors = _parse_switch(body)
    elif opcode == "unreachable":
        pass
    elif opcode == "resume":
        op = segment_value(body)
        if op:
            ops.append(op)
    elif opcode in ("call", "invoke"):
        tail = body
        if opcode == "invoke":
            m2 = re.search(r'\bto\s+label\s+(\S+)\s+unwind\s+label\s+(\S+)\s*$', tail)
            if m2:
                instr.successors = [_label_name(m2.group(1)), _label_name(m2.group(2))]
                tail = tail[: m2.start()]
        callee, ops, rtype = _parse_call_tail(tail)
        instr.callee = callee
        instr.result_type = rtype
    elif opcode == "load":
        segs = split_top(body)
        if segs:
            instr.result_type = _first_type(segs[0])
        for seg in segs[1:]:
            op = segment_value(seg)
            if op:
                ops.append(op)
    elif opcode == "store":
        for seg in split_top(body):
            op = segment_value(seg)
            if op:
                ops.append(op)
    elif opcode == "alloca":
        segs = split_top(body)
        if segs:
            instr.result_type = _first_type(segs[0]) + "*"
        for seg in segs[1:]:
            op = segment_value(seg)
            if op:
                ops.append(op)
    elif opcode == "phi":
        segs = split_top(body)
        if segs:
            instr.result_type = _first_type(segs[0])
        for seg in segs:
            br = seg.index("[") if "[" in seg else -1
            if br < 0:
                continue
            inner = seg[br + 1: seg.rfind("]")]
            halves = split_top(inner)
            if halves:
                op = _classify(halves[0]) or segment_value(halves[0])
                if op:
                    ops.append(op)
    elif opcode in ("icmp", "fcmp"):
        instr.result_type = "i1"
        for seg in split_top(body):
            op = segment_value(seg)
            if op:
                ops.append(op)
    elif opcode == "select":
        segs = split_top(body)
        for i, seg in enumerate(segs):
            op = segment_value(seg)
            if op:
                ops.append(op)
            if i == 1:
                instr.result_type = _first_type(seg)
    elif opcode in BINARY_OPS:
        segs = split_top(body)
        if segs:
            tt = [t for t in _tokens_top(segs[0]) if ID_RE.fullmatch(t) is None
                  and not INT_RE.match(t) and t not in KEYWORD_LITERALS]
            if tt:
                instr.result_type = tt[-1]
        for seg in segs:
            op = segment_value(seg)
            if op:
                ops.append(op)
    elif opcode in CAST_OPS or opcode == "freeze":
        parts = re.split(r'\bto\b', body) if opcode != "freeze" else [body]
        if len(parts) > 1:
            instr.result_type = parts[1].strip() or "var"
        op = segment_value(parts[0].strip())
        if op:
            ops.append(op)
    elif opcode == "getelementptr":
        instr.result_type = "ptr"
        segs = split_top(body)
        for seg in segs[1:]:
            op = segment_value(seg)
            if op:
                ops.append(op)
    else:
        # unknown opcode: generic scan over comma segments
        for seg in split_top(body):
            op = segment_value(seg)
            if op:
                ops.append(op)

    for i, op in enumerate(ops):
        op.position = i
    instr.operands = ops
    return instr


def _parse_switch(body: str):
    lb = body.find("[")
    rb = body.rfind("]")
    head = body[:lb] if lb >= 0 else body
    ops: List[Operand] = []
    succs: List[str] = []
    for seg in split_top(head):
        seg_toks = _tokens_top(seg)
        if seg_toks and seg_toks[0] == "label":
            succs.append(_label_name(seg_toks[-1]))
        else:
            op = segment_value(seg)
            if op:
                ops.append(op)
    if lb >= 0 and rb > lb:
        cases = body[lb + 1: rb]
        parts = re.split(r'\blabel\s+', cases)
        pending = parts[0]
        for part in parts[1:]:
            val = segment_value(pending.strip().rstrip(","))
            m = ID_RE.match(part.strip())
            if m:
                if val:
                    ops.append(val)
                succs.append(_label_name(m.group(0)))
                pending = part.strip()[m.end():].lstrip(", ")
            else:
                pending = part
    return ops, succs


def terminator_successors(instr: IrInstruction) -> List[str]:
    """Labels this terminator can jump to, in textual order."""
    return list(instr.successors)


def _parse_params(params_text: str):
    names: List[str] = []
    types: List[str] = []
    for i, seg in enumerate(split_top(params_text)):
        if seg == "...":
            continue
        toks = _tokens_top(seg)
        if not toks:
            continue
        if ID_RE.fullmatch(toks[-1]) and toks[-1].startswith("%"):
            names.append(toks[-1])
            types.append(toks[0])
        else:
            names.append("%" + str(i))
            types.append(toks[0])
    return names, types


def _parse_header(header: str):
    m = ID_RE.search(header)
    if not m or not m.group(0).startswith("@"):
        raise MalformedModule("function header without a name: %r" % header)
    name = m.group(0)
    pre = _tokens_top(header[: m.start()])
    rtype = pre[-1] if pre else "void"
    after = header[m.end():].lstrip()
    params_text = ""
    if after.startswith("("):
        depth = 0
        for i, ch in enumerate(after):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
                if depth == 0:
                    params_text = after[1:i]
                    break
    names, types = _parse_params(params_text)
    return name, rtype, names, types


def parse_module(text: str, source_path: Optional[str] = None) -> IrModule:
    if not text.strip():
        raise MalformedModule("empty input")
    module = IrModule(source_path=source_path)
    lines = text.splitlines()
    i = 0
    n = len(lines)
    while i < n:
        line = strip_comment(lines[i]).strip()
        i += 1
        if not line:
            continue
        if line.startswith("declare"):
            joined = line
            while _unbalanced(joined) and i < n:
                joined += " " + strip_comment(lines[i]).strip()
                i += 1
            try:
                name, rtype, names, types = _parse_header(joined[len("declare"):])
            except MalformedModule:
                continue
            module.functions.append(IrFunction(
                name=name, params=names, param_types=types,
                return_type=rtype, is_declaration=True))
            continue
        if line.startswith("define"):
            header = line
            while "{" not in header and i < n:
                nxt = strip_comment(lines[i]).strip()
                i += 1
                header += " " + nxt
            brace = header.index("{") if "{" in header else len(header)
            name, rtype, names, types = _parse_header(header[len("define"):brace])
            fn = IrFunction(name=name, params=names, param_types=types, return_type=rtype)
            i = _parse_body(lines, i, fn)
            if not any(b.instructions for b in fn.blocks):
                fn.is_declaration = True
                fn.blocks = []
            module.functions.append(fn)
            continue
        # globals, metadata, attributes, target lines: skipped
    if not module.functions and "{" in text:
        raise MalformedModule("no parseable functions")
    return module


def _unbalanced(s: str) -> bool:
    depth = 0
    in_str = False
    for ch in s:
        if ch == '"':
            in_str = not in_str
        if in_str:
            continue
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
    return depth > 0


def _parse_body(lines: List[str], i: int, fn: IrFunction) -> int:
    """Consume lines until the closing brace; returns the next index."""
    block: Optional[IrBlock] = None
    synth = 0

    def new_block(label: Optional[str]) -> IrBlock:
        nonlocal synth
        if label is None:
            label = "entry" if not fn.blocks else "block.%d" % synth
            synth += 1
        b = IrBlock(label=label)
        fn.blocks.append(b)
        return b

    n = len(lines)
    while i < n:
        line = strip_comment(lines[i]).strip()
        i += 1
        if not line:
            continue
        if line == "}":
            break
        m = LABEL_LINE_RE.match(line)
        if m:
            block = new_block(m.group(1).strip('"'))
            continue
        joined = line
        while _unbalanced(joined) and i < n:
            nxt = strip_comment(lines[i]).strip()
            i += 1
            joined += " " + nxt
        if block is None:
            block = new_block(None)
        instr = parse_instruction(joined)
        block.instructions.append(instr)
        if instr.is_terminator:
            block = None
    return i


def render_module(module: IrModule) -> str:
    """Re-emit a module as .ll text. Lossy for anything the parser
    dropped, but stable under parse/render round trips."""
    out: List[str] = []
    for fn in module.functions:
        params = ", ".join(
            "%s %s" % (t, p) for t, p in zip(fn.param_types, fn.params))
        if fn.is_declaration:
            out.append("declare %s %s(%s)" % (fn.return_type, fn.name, params))
            out.append("")
            continue
        out.append("define %s %s(%s) {" % (fn.return_type, fn.name, params))
        for bi, block in enumerate(fn.blocks):
            if bi > 0:
                out.append("")
            out.append("%s:" % block.label)
            for instr in block.instructions:
                out.append("  " + instr.full_text)
        out.append("}")
        out.append("")
    return "\n".join(out)
