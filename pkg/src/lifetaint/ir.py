"""Mini-bytecode program representation: loader, validation, resolution.

Apps are JSON documents (see docs/ir.md for the instruction set).  Methods
are identified by ``Class.name/argc`` where argc counts explicit arguments;
instance methods declare the receiver as their first parameter.  A signature
that does not resolve to app code is an external API handled by the engine's
API handlers.
"""

import json
from dataclasses import dataclass

from .errors import AppLoadError

PARENT_KINDS = ("ACTIVITY", "SERVICE", "RECEIVER", "THREAD", "ASYNC_TASK", "PLAIN")
COMPONENT_KINDS = ("ACTIVITY", "SERVICE", "RECEIVER")

INVOKE_KINDS = ("VIRTUAL", "DIRECT", "STATIC")

# opcode -> (operand count, has receiver) for invokes; plain arity otherwise
_ARITY = {
    "CONST_STRING": 2,
    "CONST_NUM": 2,
    "MOVE": 2,
    "NEW_INSTANCE": 2,
    "IGET": 3,
    "IPUT": 3,
    "SGET": 2,
    "SPUT": 2,
    "COLLECTION_NEW": 1,
    "COLLECTION_PUT": 3,
    "COLLECTION_GET": 3,
    "IF_GOTO": 2,
    "GOTO": 1,
    "RETURN": 1,
    "RETURN_VOID": 0,
    "INVOKE_VIRTUAL": 4,
    "INVOKE_DIRECT": 4,
    "INVOKE_STATIC": 3,
}


@dataclass(frozen=True)
class Instruction:
    kind: str
    operands: tuple
    index: int

    @property
    def is_invoke(self):
        return self.kind.startswith("INVOKE_")

    @property
    def invoke_kind(self):
        return self.kind.split("_", 1)[1]

    @property
    def result(self):
        return self.operands[0]

    @property
    def receiver(self):
        return self.operands[1] if self.kind != "INVOKE_STATIC" else None

    @property
    def signature(self):
        return self.operands[2] if self.kind != "INVOKE_STATIC" else self.operands[1]

    @property
    def args(self):
        return self.operands[3] if self.kind != "INVOKE_STATIC" else self.operands[2]


@dataclass
class MethodDef:
    class_name: str
    sig: str                 # "name/argc"
    params: list
    instructions: list
    labels: dict

    @property
    def name(self):
        return self.sig.split("/", 1)[0]

    @property
    def argc(self):
        return int(self.sig.split("/", 1)[1])

    @property
    def full_signature(self):
        return "%s.%s" % (self.class_name, self.sig)


@dataclass
class ClassDef:
    name: str
    parent_kind: str
    static_fields: list
    methods: list

    def method_by_sig(self, sig):
        for m in self.methods:
            if m.sig == sig:
                return m
        return None

    def method_by_name(self, name):
        hits = [m for m in self.methods if m.name == name]
        return hits[0] if hits else None


@dataclass
class ComponentDef:
    class_name: str
    kind: str
    aui_callbacks: list
    misc_callbacks: list
    klass: ClassDef = None


@dataclass
class AppModel:
    app_id: str
    version: str
    classes: list
    components: list

    def __post_init__(self):
        self._classes = {c.name: c for c in self.classes}
        self._methods = {}
        for c in self.classes:
            for m in c.methods:
                self._methods[m.full_signature] = m

    def klass(self, name):
        return self._classes.get(name)

    def to_dict(self):
        """Canonical dict form; load(to_dict(load(f))) is structurally stable."""
        return {
            "app_id": self.app_id,
            "version": self.version,
            "classes": [
                {
                    "name": c.name,
                    "parent_kind": c.parent_kind,
                    "static_fields": list(c.static_fields),
                    "methods": [
                        {
                            "sig": m.sig,
                            "params": list(m.params),
                            "instructions": [
                                [i.kind] + [list(op) if isinstance(op, tuple) else op
                                            for op in i.operands]
                                for i in m.instructions
                            ],
                            "labels": dict(sorted(m.labels.items())),
                        }
                        for m in c.methods
                    ],
                }
                for c in self.classes
            ],
            "components": [
                {
                    "class": comp.class_name,
                    "kind": comp.kind,
                    "aui_callbacks": list(comp.aui_callbacks),
                    "misc_callbacks": list(comp.misc_callbacks),
                }
                for comp in self.components
            ],
        }


def resolve_method(app, signature):
    """MethodDef for a full signature, or None when it is an external API."""
    return app._methods.get(signature)


def _check_sig(sig, where):
    if not isinstance(sig, str) or "/" not in sig:
        raise AppLoadError("%s: bad method signature %r" % (where, sig))
    name, _, argc = sig.partition("/")
    if not name or not argc.isdigit():
        raise AppLoadError("%s: bad method signature %r" % (where, sig))


_WRITES_DST = {"CONST_STRING", "CONST_NUM", "MOVE", "NEW_INSTANCE", "IGET",
               "SGET", "COLLECTION_NEW", "COLLECTION_GET",
               "INVOKE_VIRTUAL", "INVOKE_DIRECT", "INVOKE_STATIC"}


def _parse_instruction(raw, idx, where):
    if not isinstance(raw, list) or not raw:
        raise AppLoadError("%s: instruction %d is not a non-empty list" % (where, idx))
    kind, *ops = raw
    if kind not in _ARITY:
        raise AppLoadError("%s: unknown opcode %r at %d" % (where, kind, idx))
    if len(ops) != _ARITY[kind]:
        raise AppLoadError(
            "%s: %s at %d takes %d operands, got %d" % (where, kind, idx, _ARITY[kind], len(ops))
        )
    if kind in _WRITES_DST and ops[0] == "this":
        raise AppLoadError("%s: %s at %d cannot write to 'this'" % (where, kind, idx))
    if kind.startswith("INVOKE_"):
        args = ops[-1]
        if not isinstance(args, (list, tuple)):
            raise AppLoadError("%s: %s at %d needs an argument list" % (where, kind, idx))
        sig = ops[2] if kind != "INVOKE_STATIC" else ops[1]
        full = sig if "." in sig else None
        if full is None:
            raise AppLoadError("%s: %s at %d needs a Class.method/argc signature" % (where, kind, idx))
        cls, _, msig = sig.rpartition(".")
        _check_sig(msig, where)
        declared = int(msig.rsplit("/", 1)[1])
        if len(args) != declared:
            raise AppLoadError(
                "%s: %s at %d passes %d args to %s" % (where, kind, idx, len(args), sig)
            )
        ops = [*ops[:-1], tuple(args)]
    return Instruction(kind, tuple(ops), idx)


def _parse_method(raw, class_name, where):
    sig = raw.get("sig")
    _check_sig(sig if isinstance(sig, str) else "", where)
    params = list(raw.get("params", []))
    labels = dict(raw.get("labels", {}))
    instrs = [
        _parse_instruction(ins, i, "%s.%s" % (where, sig))
        for i, ins in enumerate(raw.get("instructions", []))
    ]
    for lbl, target in labels.items():
        if not isinstance(target, int) or not 0 <= target <= len(instrs):
            raise AppLoadError("%s.%s: label %r points outside the method" % (where, sig, lbl))
    for ins in instrs:
        if ins.kind in ("IF_GOTO", "GOTO"):
            lbl = ins.operands[-1]
            if lbl not in labels:
                raise AppLoadError(
                    "%s.%s: branch to missing label %r at %d" % (where, sig, lbl, ins.index)
                )
    method = MethodDef(class_name, sig, params, instrs, labels)
    declared_argc = method.argc
    explicit = len(params) - (1 if params and params[0] == "this" else 0)
    if explicit != declared_argc:
        raise AppLoadError(
            "%s.%s: declares %d args but lists %d non-this params" % (where, sig, declared_argc, explicit)
        )
    return method


def load_app(path):
    """Load and validate an app IR file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise AppLoadError("%s: not valid JSON: %s" % (path, exc)) from exc
    return app_from_dict(doc, source=str(path))


def app_from_dict(doc, source="<dict>"):
    app_id = doc.get("app_id")
    if not app_id:
        raise AppLoadError("%s: missing app_id" % source)
    classes = []
    for rawc in doc.get("classes", []):
        name = rawc.get("name")
        kind = rawc.get("parent_kind", "PLAIN")
        if not name:
            raise AppLoadError("%s: class without a name" % source)
        if kind not in PARENT_KINDS:
            raise AppLoadError("%s: class %s has unknown parent_kind %r" % (source, name, kind))
        methods = [_parse_method(m, name, "%s:%s" % (source, name)) for m in rawc.get("methods", [])]
        sigs = [m.sig for m in methods]
        for sig in sigs:
            if sigs.count(sig) > 1:
                raise AppLoadError("%s: ambiguous signature %s.%s" % (source, name, sig))
        classes.append(ClassDef(name, kind, list(rawc.get("static_fields", [])), methods))
    names = [c.name for c in classes]
    for n in names:
        if names.count(n) > 1:
            raise AppLoadError("%s: duplicate class %r" % (source, n))

    by_name = {c.name: c for c in classes}
    components = []
    for rawcomp in doc.get("components", []):
        cname = rawcomp.get("class")
        kind = rawcomp.get("kind")
        if cname not in by_name:
            raise AppLoadError("%s: component references unknown class %r" % (source, cname))
        if kind not in COMPONENT_KINDS:
            raise AppLoadError("%s: component %s has unknown kind %r" % (source, cname, kind))
        comp = ComponentDef(
            cname, kind,
            list(rawcomp.get("aui_callbacks", [])),
            list(rawcomp.get("misc_callbacks", [])),
            by_name[cname],
        )
        for cb in comp.aui_callbacks + comp.misc_callbacks:
            if comp.klass.method_by_name(cb) is None:
                raise AppLoadError(
                    "%s: component %s declares callback %r with no method" % (source, cname, cb)
                )
        components.append(comp)

    app = AppModel(app_id, str(doc.get("version", "0")), classes, components)
    _check_invokes(app, source)
    return app


def _check_invokes(app, source):
    """Invokes that resolve to app code must agree with the target's shape."""
    for klass in app.classes:
        for method in klass.methods:
            for ins in method.instructions:
                if not ins.is_invoke:
                    continue
                target = resolve_method(app, ins.signature)
                if target is None:
                    continue
                takes_this = bool(target.params) and target.params[0] == "this"
                if ins.kind == "INVOKE_STATIC" and takes_this:
                    raise AppLoadError(
                        "%s: %s[%d] calls instance method %s statically"
                        % (source, method.full_signature, ins.index, ins.signature)
                    )
                if ins.kind != "INVOKE_STATIC" and not takes_this:
                    raise AppLoadError(
                        "%s: %s[%d] passes a receiver to static method %s"
                        % (source, method.full_signature, ins.index, ins.signature)
                    )
