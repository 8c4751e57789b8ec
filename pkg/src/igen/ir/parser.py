"""Parser for the textual IR.

Newlines are not significant: instruction boundaries follow from each
opcode's fixed shape, so ``func @id(%x: i64) -> i64 { entry: ret %x }`` is a
valid one-line module.  ``#`` starts a comment.
"""

from __future__ import annotations

import re
from typing import Optional

from ..errors import ParseError
from .model import (BINOPS, CAST_KINDS, FBINOPS, FCMP_PREDS, ICMP_PREDS, Block,
                    External, FloatLit, Function, Global, Instr, IntLit, Module,
                    Null, Reg, Sym)
from .types import PRIMITIVES, VOID, ArrayType, IrType, StructType

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<reg>%[\w.$]+)
  | (?P<sym>@[\w.$]+)
  | (?P<float>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>0x[0-9a-fA-F]+|\d+)
  | (?P<ident>[A-Za-z_][\w.]*)
  | (?P<arrow>->)
  | (?P<punct>[{}()\[\],:=*+\-])
""", re.VERBOSE)


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col

    def __repr__(self):
        return f"Token({self.kind}, {self.text!r}, {self.line}:{self.col})"


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    line, line_start = 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok = m.group()
        if kind != "ws":
            out.append(Token(kind, tok, line, pos - line_start + 1))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = pos + tok.rfind("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


_OPERAND_IDENTS = ("null", "inf", "nan")


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.aliases: dict[str, IrType] = {}

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def next(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("punct", "ident", "arrow") and t.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}, got {self.tok.text or 'end of input'!r}")
        return self.next()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise self.error(f"expected {what}, got {self.tok.text or 'end of input'!r}")
        return self.next()

    def int_value(self) -> int:
        neg = self.accept("-")
        t = self.expect_kind("int", "integer")
        v = int(t.text, 0)
        return -v if neg else v

    # types
    def type(self) -> IrType:
        t = self.tok
        if self.accept("["):
            count = self.int_value()
            if count < 0:
                raise self.error("negative array length", t)
            if not (self.tok.kind == "ident" and self.tok.text == "x"):
                raise self.error("expected 'x' in array type")
            self.next()
            elem = self.type()
            self.expect("]")
            return ArrayType(elem, count)
        if self.accept("{"):
            fields = []
            if not self.at("}"):
                fields.append(self.type())
                while self.accept(","):
                    fields.append(self.type())
            self.expect("}")
            return StructType(tuple(fields))
        if t.kind == "ident":
            self.next()
            if t.text in PRIMITIVES:
                return PRIMITIVES[t.text]
            if t.text == "void":
                return VOID
            if t.text in self.aliases:
                return self.aliases[t.text]
        raise self.error(f"unknown type {t.text!r}", t)

    # operands and constants
    def operand_starts(self) -> bool:
        t = self.tok
        if t.kind == "reg":
            return not (self.peek().kind == "punct" and self.peek().text == "=")
        if t.kind in ("int", "float", "sym"):
            return True
        if t.kind == "punct" and t.text == "-":
            return self.peek().kind in ("int", "float", "ident")
        return t.kind == "ident" and t.text in _OPERAND_IDENTS

    def operand(self):
        t = self.tok
        if t.kind == "reg":
            self.next()
            return Reg(t.text[1:])
        if t.kind == "sym":
            self.next()
            return Sym(t.text[1:])
        neg = self.accept("-")
        t = self.tok
        if t.kind == "int":
            self.next()
            v = int(t.text, 0)
            return IntLit(-v if neg else v)
        if t.kind == "float":
            self.next()
            v = float(t.text)
            return FloatLit(-v if neg else v)
        if t.kind == "ident" and t.text in ("inf", "nan"):
            self.next()
            v = float(t.text)
            return FloatLit(-v if neg else v)
        if t.kind == "ident" and t.text == "null" and not neg:
            self.next()
            return Null()
        raise self.error(f"expected operand, got {t.text or 'end of input'!r}", t)

    def constant(self):
        if self.accept("zeroinit"):
            return "zeroinit"
        if self.at("{") or self.at("["):
            close = "}" if self.next().text == "{" else "]"
            items = []
            if not self.at(close):
                items.append(self.constant())
                while self.accept(","):
                    items.append(self.constant())
            self.expect(close)
            return tuple(items)
        op = self.operand()
        if isinstance(op, Reg):
            raise self.error("register in constant initializer")
        return op

    # top level
    def module(self) -> Module:
        globals_, funcs, externs = [], [], []
        names: set[str] = set()

        def claim(tok: Token, name: str):
            if name in names:
                raise ParseError(f"duplicate name @{name}", tok.line, tok.col)
            names.add(name)

        while self.tok.kind != "eof":
            t = self.tok
            if self.accept("type"):
                nt = self.expect_kind("ident", "type name")
                if nt.text in self.aliases or nt.text in PRIMITIVES or nt.text == "void":
                    raise self.error(f"duplicate type name {nt.text!r}", nt)
                self.expect("=")
                self.aliases[nt.text] = self.type()
            elif self.accept("global"):
                st = self.expect_kind("sym", "global name")
                claim(st, st.text[1:])
                self.expect(":")
                ty = self.type()
                init = self.constant() if self.accept("=") else None
                globals_.append(Global(st.text[1:], ty, init))
            elif self.accept("declare"):
                st = self.expect_kind("sym", "function name")
                claim(st, st.text[1:])
                self.expect("(")
                params = []
                if not self.at(")"):
                    params.append(self.type())
                    while self.accept(","):
                        params.append(self.type())
                self.expect(")")
                self.expect("->")
                ret = self.type()
                noreturn = self.accept("noreturn")
                externs.append(External(st.text[1:], tuple(params), ret, noreturn))
            elif self.accept("func"):
                st = self.expect_kind("sym", "function name")
                claim(st, st.text[1:])
                funcs.append(self.function(st.text[1:]))
            else:
                raise self.error(f"expected 'type', 'global', 'declare' or 'func', got {t.text!r}")
        return Module(tuple(globals_), tuple(funcs), tuple(externs), tuple(self.aliases.items()))

    def function(self, name: str) -> Function:
        self.expect("(")
        params = []
        seen = set()
        if not self.at(")"):
            while True:
                rt = self.expect_kind("reg", "parameter")
                if rt.text[1:] in seen:
                    raise self.error(f"duplicate parameter {rt.text}", rt)
                seen.add(rt.text[1:])
                self.expect(":")
                params.append((rt.text[1:], self.type()))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("->")
        ret = self.type()
        self.expect("{")
        blocks: list[Block] = []
        label: Optional[str] = None
        instrs: list[Instr] = []
        labels_seen: set[str] = set()
        while not self.at("}"):
            t = self.tok
            if t.kind == "eof":
                raise self.error("unterminated function body")
            if t.kind == "ident" and self.peek().kind == "punct" and self.peek().text == ":":
                if label is not None:
                    blocks.append(Block(label, tuple(instrs)))
                if t.text in labels_seen:
                    raise self.error(f"duplicate label {t.text}", t)
                labels_seen.add(t.text)
                label, instrs = t.text, []
                self.i += 2
                continue
            if label is None:
                raise self.error("instruction outside of a block")
            instrs.append(self.instr())
        self.expect("}")
        if label is not None:
            blocks.append(Block(label, tuple(instrs)))
        fn = Function(name, tuple(params), ret, tuple(blocks))
        _check_defined(fn)
        return fn

    def args_list(self) -> tuple:
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.operand())
            while self.accept(","):
                args.append(self.operand())
        self.expect(")")
        return tuple(args)

    def instr(self) -> Instr:
        start = self.tok
        dst = None
        if start.kind == "reg" and self.peek().kind == "punct" and self.peek().text == "=":
            dst = start.text[1:]
            self.i += 2
        opt = self.expect_kind("ident", "opcode")
        op = opt.text
        pos = dict(line=start.line, col=start.col)

        def need_dst():
            if dst is None:
                raise ParseError(f"'{op}' needs a destination register", start.line, start.col)

        def no_dst():
            if dst is not None:
                raise ParseError(f"'{op}' does not produce a value", start.line, start.col)

        if op == "const":
            need_dst()
            ty = self.type()
            return Instr("const", dst, (self.operand(),), ty=ty, **pos)
        if op in BINOPS or op in FBINOPS:
            need_dst()
            a = self.operand()
            self.expect(",")
            return Instr(op, dst, (a, self.operand()), **pos)
        if op in ("icmp", "fcmp"):
            need_dst()
            pt = self.expect_kind("ident", "predicate")
            preds = ICMP_PREDS if op == "icmp" else FCMP_PREDS
            if pt.text not in preds:
                raise self.error(f"unknown {op} predicate {pt.text!r}", pt)
            a = self.operand()
            self.expect(",")
            return Instr(op, dst, (a, self.operand()), pred=pt.text, **pos)
        if op == "gep":
            need_dst()
            base = self.operand()
            self.expect(",")
            index, scale, disp = self.offset_expr()
            args = (base,) if index is None else (base, index)
            return Instr("gep", dst, args, scale=scale, disp=disp, **pos)
        if op == "load":
            need_dst()
            ty = self.type()
            return Instr("load", dst, (self.operand(),), ty=ty, **pos)
        if op == "store":
            no_dst()
            ty = self.type()
            v = self.operand()
            self.expect(",")
            return Instr("store", None, (v, self.operand()), ty=ty, **pos)
        if op == "call":
            st = self.expect_kind("sym", "callee")
            return Instr("call", dst, self.args_list(), callee=st.text[1:], **pos)
        if op == "icall":
            ty = self.type()
            fp = self.operand()
            if not isinstance(fp, Reg):
                raise self.error("icall target must be a register")
            return Instr("icall", dst, (fp,) + self.args_list(), ty=ty, **pos)
        if op == "select":
            need_dst()
            c = self.operand()
            self.expect(",")
            a = self.operand()
            self.expect(",")
            return Instr("select", dst, (c, a, self.operand()), **pos)
        if op == "cast":
            need_dst()
            kt = self.expect_kind("ident", "cast kind")
            if kt.text not in CAST_KINDS:
                raise self.error(f"unknown cast kind {kt.text!r}", kt)
            v = self.operand()
            self.expect("to")
            return Instr("cast", dst, (v,), ty=self.type(), pred=kt.text, **pos)
        if op == "alloca":
            need_dst()
            return Instr("alloca", dst, (), ty=self.type(), **pos)
        if op == "br":
            no_dst()
            c = self.operand()
            self.expect(",")
            l1 = self.expect_kind("ident", "label").text
            self.expect(",")
            l2 = self.expect_kind("ident", "label").text
            return Instr("br", None, (c,), labels=(l1, l2), **pos)
        if op == "jmp":
            no_dst()
            return Instr("jmp", None, (), labels=(self.expect_kind("ident", "label").text,), **pos)
        if op == "ret":
            no_dst()
            if self.operand_starts():
                return Instr("ret", None, (self.operand(),), **pos)
            return Instr("ret", None, (), **pos)
        if op == "unreachable":
            no_dst()
            return Instr("unreachable", **pos)
        raise ParseError(f"unknown opcode {op!r}", opt.line, opt.col)

    def offset_expr(self):
        index = None
        scale = 1
        disp = 0
        sign = -1 if self.accept("-") else 1
        while True:
            t = self.tok
            if t.kind == "reg":
                if index is not None or sign < 0:
                    raise self.error("offset expression allows one added register", t)
                self.next()
                index = Reg(t.text[1:])
                if self.accept("*"):
                    scale = self.int_value()
            else:
                disp += sign * int(self.expect_kind("int", "offset").text, 0)
            if self.accept("+"):
                sign = 1
            elif self.accept("-"):
                sign = -1
            else:
                return index, scale, disp


def _check_defined(fn: Function) -> None:
    defined = {p for p, _ in fn.params}
    for ins in fn.instructions():
        if ins.dst is not None:
            defined.add(ins.dst)
    for ins in fn.instructions():
        for u in ins.uses():
            if u not in defined:
                raise ParseError(f"undefined register %{u}", ins.line, ins.col)


def parse_module(text: str) -> Module:
    """Parse IR source text into a :class:`Module`."""
    return _Parser(text).module()
