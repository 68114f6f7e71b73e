"""Independent brute-force evaluator used as the test oracle.

Re-derives every composition rule over plain tuples and atom strings,
with its own variable numbering and its own failure conditions. Kept
deliberately separate in style and structure from the package evaluator:
values are tagged tuples, atoms are rendered strings, and the whole
sentence is translated in one recursive pass.

Value encodings (CFQ-style domain):
    ("A", frozenset of attr names)
    ("P", frozenset of (subj_attrs_sorted_tuple, chain_tuple))
    ("E", frozenset of (head_attrs_sorted_tuple, chain_tuple, tail))
        tail = ("ent", name) | ("anon", attrs_sorted_tuple)

Value encodings (event-style domain):
    ("E", frozenset of (ref_str, atoms_frozenset, role_or_None))
    ("P"/("PROP"), frozenset of (event_str, pred, roles_frozenset,
                                 atoms_frozenset))
"""

from __future__ import annotations

import itertools


class OracleFail(Exception):
    pass


def _attr_union(x, y):
    return tuple(sorted(set(x) | set(y)))


def _apply_cfq(op, vals):
    kinds = tuple(v[0] for v in vals)
    if op == "AND_PP":
        if kinds != ("P", "P"):
            raise OracleFail(op)
        return ("P", vals[0][1] | vals[1][1])
    if op == "AND_EE":
        if kinds != ("E", "E"):
            raise OracleFail(op)
        return ("E", vals[0][1] | vals[1][1])
    if op == "AND_AA":
        if kinds != ("A", "A"):
            raise OracleFail(op)
        return ("A", vals[0][1] | vals[1][1])
    if op in ("AND_AE", "AND_EA"):
        a, e = (vals[0], vals[1]) if op == "AND_AE" else (vals[1], vals[0])
        if a[0] != "A" or e[0] != "E":
            raise OracleFail(op)
        attrs = tuple(sorted(a[1]))
        return ("E", frozenset((_attr_union(h, attrs), c, t) for h, c, t in e[1]))
    if op in ("AND_AP", "AND_PA"):
        a, p = (vals[0], vals[1]) if op == "AND_AP" else (vals[1], vals[0])
        if a[0] != "A" or p[0] != "P":
            raise OracleFail(op)
        attrs = tuple(sorted(a[1]))
        return ("P", frozenset((_attr_union(s, attrs), c) for s, c in p[1]))
    if op in ("JOIN_PE", "JOIN_EP"):
        p, e = (vals[0], vals[1]) if op == "JOIN_PE" else (vals[1], vals[0])
        if p[0] != "P" or e[0] != "E":
            raise OracleFail(op)
        out = set()
        for sattrs, pchain in p[1]:
            for hattrs, echain, tail in e[1]:
                if hattrs:
                    raise OracleFail("join onto attributed entity")
                out.add((sattrs, pchain + echain, tail))
        return ("E", frozenset(out))
    if op in ("JOIN_PA", "JOIN_AP"):
        p, a = (vals[0], vals[1]) if op == "JOIN_PA" else (vals[1], vals[0])
        if p[0] != "P" or a[0] != "A":
            raise OracleFail(op)
        anon = ("anon", tuple(sorted(a[1])))
        return ("E", frozenset((sattrs, chain, anon) for sattrs, chain in p[1]))
    raise OracleFail(f"unknown operation {op}")


def _apply_cogs(op, vals):
    kinds = tuple(v[0] for v in vals)
    preps = {"ON", "IN", "BESIDE"}
    roles = {"AGE": "AGENT", "THE": "THEME", "REC": "RECIPIENT"}
    base = op[:-4] if op.endswith("_INV") else op
    if base in preps:
        if kinds != ("E", "E"):
            raise OracleFail(op)
        head, dep = (vals[1], vals[0]) if op.endswith("_INV") else (vals[0], vals[1])
        out = set()
        for ref, atoms, role in head[1]:
            acc = set(atoms)
            for dref, datoms, _ in dep[1]:
                acc |= datoms
                acc.add(f"{ref} {base} {dref}")
            out.add((ref, frozenset(acc), role))
        return ("E", frozenset(out))
    if len(op) == 7 and op[:3] in roles and op[4:] in roles:
        if kinds != ("E", "E"):
            raise OracleFail(op)
        out = set()
        for tag, val in ((roles[op[:3]], vals[0]), (roles[op[4:]], vals[1])):
            for ref, atoms, role in val[1]:
                if role is not None:
                    raise OracleFail("re-tagging a role")
                out.add((ref, atoms, tag))
        return ("E", frozenset(out))
    if op.startswith("FILL_"):
        _, role, order = op.split("_")
        e, f = (vals[0], vals[1]) if order == "EP" else (vals[1], vals[0])
        if e[0] != "E" or f[0] not in ("P", "PROP"):
            raise OracleFail(op)
        out = set()
        for ev, pred, filled, atoms in f[1]:
            taken = set(filled)
            acc = set(atoms)
            for ref, natoms, tagged in e[1]:
                use = tagged or role
                if use in taken:
                    raise OracleFail("role already filled")
                taken.add(use)
                acc |= natoms
                acc.add(f"{ev} {use} {ref}")
            out.add((ev, pred, frozenset(taken), frozenset(acc)))
        return ("PROP", frozenset(out))
    if base in ("CCOMP", "XCOMP"):
        if any(k not in ("P", "PROP") for k in kinds):
            raise OracleFail(op)
        head, dep = (vals[1], vals[0]) if op.endswith("_INV") else (vals[0], vals[1])
        out = set()
        for ev, pred, filled, atoms in head[1]:
            acc = set(atoms)
            for dev, dpred, _, datoms in dep[1]:
                acc |= datoms
                acc.add(f"{ev} {base} {dev}")
                acc.add(f"{dev} ATTR={dpred}")
            out.add((ev, pred, filled, frozenset(acc)))
        return ("PROP", frozenset(out))
    raise OracleFail(f"unknown operation {op}")


def oracle_evaluate(kind_of, tree, assignment, tokens, style="cfq"):
    """Evaluate a (tree, assignment) pair from scratch.

    ``kind_of`` maps primitive id -> one of "E"/"P"/"A". Returns a set of
    atom strings, or None when the sentence is uninterpretable.
    """
    counter = itertools.count(1)

    def fresh():
        return f"?x{next(counter)}"

    def prim(pid):
        k = kind_of.get(pid)
        if k is None:
            raise OracleFail(f"unknown primitive {pid}")
        if style == "cfq":
            if k == "E":
                return ("E", frozenset({((), (), ("ent", pid))}))
            if k == "P":
                return ("P", frozenset({((), (pid,))}))
            return ("A", frozenset({pid}))
        # event style
        if k == "E":
            if pid[0].isupper():
                return ("E", frozenset({(pid, frozenset(), None)}))
            noun = pid
            extra = set()
            if noun.startswith("def_"):
                noun = noun[4:]
                extra = {"DEF"}
            v = fresh()
            atoms = frozenset({f"{v} ATTR={noun.upper()}"}
                              | {f"{v} ATTR={m}" for m in extra})
            return ("E", frozenset({(v, atoms, None)}))
        ev = fresh()
        return ("P", frozenset({(ev, pid.upper(), frozenset(), frozenset())}))

    def walk(node):
        role, name = assignment[node.id]
        if not node.nt_children:
            if role != "primitive":
                raise OracleFail("lexical node without primitive")
            return prim(name)
        if role != "operation":
            raise OracleFail("algebraic node without operation")
        kids = sorted(node.nt_children, key=lambda n: n.lo)
        vals = [walk(k) for k in kids]
        if len(vals) != 2:
            raise OracleFail("operations here are binary")
        return _apply_cfq(name, vals) if style == "cfq" else _apply_cogs(name, vals)

    def tail_str(tail, atoms):
        if tail[0] == "ent":
            return tail[1]
        v = fresh()
        for a in tail[1]:
            atoms.add(f"{v} ATTR={a}")
        return v

    top = tree.top_level()
    if len(top) != 1:
        return None
    try:
        value = walk(top[0])
        if style != "cfq":
            if value[0] != "PROP":
                return None
            atoms = set()
            for ev, pred, _filled, frame_atoms in value[1]:
                atoms |= set(frame_atoms)
                atoms.add(f"{ev} ATTR={pred}")
            return atoms or None

        lead = tokens[0].lower()
        if lead in ("who", "what"):
            if value[0] != "E":
                return None
            atoms = set()
            for hattrs, chain, tail in sorted(value[1]):
                if not chain:
                    return None
                for a in hattrs:
                    atoms.add(f"?x0 ATTR={a}")
                atoms.add(f"?x0 {'.'.join(chain)} {tail_str(tail, atoms)}")
            return atoms
        if lead in ("is", "did", "was"):
            if value[0] != "E":
                return None
            bare = [t for t in value[1] if not t[1] and t[2][0] == "ent"]
            if len(bare) != 1:
                return None
            subj = bare[0][2][1]
            atoms = set()
            for a in bare[0][0]:
                atoms.add(f"{subj} ATTR={a}")
            for hattrs, chain, tail in sorted(value[1]):
                if (hattrs, chain, tail) == bare[0]:
                    continue
                for a in hattrs:
                    atoms.add(f"{subj} ATTR={a}")
                if chain:
                    atoms.add(f"{subj} {'.'.join(chain)} {tail_str(tail, atoms)}")
                elif tail[0] == "anon":
                    for a in tail[1]:
                        atoms.add(f"{subj} ATTR={a}")
            return atoms or None
        return None
    except OracleFail:
        return None
    except KeyError:
        return None
