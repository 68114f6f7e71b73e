"""Semantic algebra: operations, evaluation, canonicalization, grammar."""

import itertools

import numpy as np
import pytest

from treesem import semalg
from treesem.semalg import (
    Anon,
    AttrAtom,
    Ent,
    EntityTerm,
    EvaluationFailure,
    Kind,
    MeaningSyntaxError,
    PathAtom,
    PredTerm,
    SemanticValue,
    TypeMismatch,
    Var,
    apply,
    equivalent,
    evaluate,
    evaluate_value,
    meaning_primitives,
    parse_meaning,
    print_meaning,
    to_cnf,
)
from treesem.trees import SyntaxTree, leaf, merge

from helpers import (
    kind_letter_map,
    random_cfq_case,
    random_cogs_case,
    small_cfq_domain,
    small_cogs_domain,
)
from oracle_eval import oracle_evaluate

DOM = small_cfq_domain()
COGS = small_cogs_domain()


def prim_value(pid):
    return DOM.primitive_value(pid, semalg.VarAlloc())


def bijection_equivalent(atoms1, atoms2):
    """Independent equivalence check: enumerate bijections over the bound
    variables; the answer variable ?x0 stays fixed."""
    def vars_of(atoms):
        out = []
        for a in atoms:
            refs = (a.subject, a.obj) if isinstance(a, PathAtom) else (a.subject,)
            for r in refs:
                if isinstance(r, Var) and r.index not in out and r.index != 0:
                    out.append(r.index)
        return out

    def has_answer(atoms):
        for a in atoms:
            refs = (a.subject, a.obj) if isinstance(a, PathAtom) else (a.subject,)
            if any(isinstance(r, Var) and r.index == 0 for r in refs):
                return True
        return False

    if has_answer(atoms1) != has_answer(atoms2):
        return False
    v1, v2 = vars_of(atoms1), vars_of(atoms2)
    if len(v1) != len(v2):
        return False

    def rename(atoms, mapping):
        def r(ref):
            if isinstance(ref, Var) and ref.index != 0:
                return Var(mapping[ref.index])
            return ref
        out = set()
        for a in atoms:
            if isinstance(a, PathAtom):
                out.add(PathAtom(r(a.subject), a.chain, r(a.obj)))
            else:
                out.add(AttrAtom(r(a.subject), a.attr))
        return out

    target = set(atoms2)
    for perm in itertools.permutations(v2):
        if rename(atoms1, dict(zip(v1, perm))) == target:
            return True
    return False


class TestApply:
    def test_join_predicate_entity(self):
        p = prim_value("EDIT")
        e = prim_value("M1")
        out = apply(DOM.operations["JOIN_PE"], [p, e])
        assert out.kind == Kind.ENTITY
        assert out.terms == frozenset(
            [EntityTerm(frozenset(), ("EDIT",), Ent("M1"))])

    def test_attr_conjunction_union(self):
        out = apply(DOM.operations["AND_AA"],
                    [prim_value("ITALIAN"), prim_value("FEMALE")])
        assert out.terms == frozenset({"ITALIAN", "FEMALE"})

    def test_entity_conjunction_idempotent(self):
        e = prim_value("M0")
        out = apply(DOM.operations["AND_EE"], [e, e])
        assert out.terms == e.terms

    def test_attr_onto_entity_head(self):
        out = apply(DOM.operations["AND_AE"],
                    [prim_value("ITALIAN"), prim_value("M0")])
        (term,) = out.terms
        assert term.head_attrs == frozenset({"ITALIAN"})
        assert term.chain == () and term.tail == Ent("M0")

    def test_attr_onto_predicate_subject(self):
        out = apply(DOM.operations["AND_PA"],
                    [prim_value("EDIT"), prim_value("ITALIAN")])
        (term,) = out.terms
        assert term.subj_attrs == frozenset({"ITALIAN"})

    def test_join_predicate_attr_anonymous_tail(self):
        out = apply(DOM.operations["JOIN_PA"],
                    [prim_value("MARRY"), prim_value("ITALIAN")])
        (term,) = out.terms
        assert term.tail == Anon(frozenset({"ITALIAN"}))

    def test_chain_concatenation(self):
        inner = apply(DOM.operations["JOIN_PE"],
                      [prim_value("PREQUEL"), prim_value("M0")])
        outer = apply(DOM.operations["JOIN_PE"], [prim_value("DIRECT"), inner])
        (term,) = outer.terms
        assert term.chain == ("DIRECT", "PREQUEL")

    def test_type_mismatch_raises(self):
        with pytest.raises(TypeMismatch):
            apply(DOM.operations["AND_PP"], [prim_value("M0"), prim_value("M1")])

    def test_arity_mismatch_raises(self):
        with pytest.raises(TypeMismatch):
            apply(DOM.operations["AND_PP"], [prim_value("DIRECT")])

    def test_join_onto_attributed_entity_fails(self):
        dressed = apply(DOM.operations["AND_AE"],
                        [prim_value("ITALIAN"), prim_value("M0")])
        with pytest.raises(TypeMismatch):
            apply(DOM.operations["JOIN_PE"], [prim_value("DIRECT"), dressed])


def four_conjunct_case():
    """'who directed and edited M0 's prequel and M1 ?' with its gold tree."""
    tokens = "who directed and edited M0 's prequel and M1 ?".split()
    # labels must exist before merging so nt_children are derived correctly
    l = [leaf(i) for i in range(len(tokens))]
    for i, lab in ((1, 2), (3, 2), (4, 1), (6, 2), (8, 1)):
        l[i].label = lab
    vconj = merge(l[1], merge(l[2], l[3]), label=2)      # directed and edited
    poss = merge(l[4], merge(l[5], l[6]), label=1)       # M0 's prequel
    npc = merge(poss, merge(l[7], l[8]), label=1)        # ... and M1
    vp = merge(vconj, npc, label=1)
    root = merge(l[0], merge(vp, l[9]))
    tree = SyntaxTree.assemble(root, len(tokens))
    assignment = {
        l[1].id: ("primitive", "DIRECT"),
        l[3].id: ("primitive", "EDIT"),
        l[4].id: ("primitive", "M0"),
        l[6].id: ("primitive", "PREQUEL"),
        l[8].id: ("primitive", "M1"),
        vconj.id: ("operation", "AND_PP"),
        poss.id: ("operation", "JOIN_EP"),
        npc.id: ("operation", "AND_EE"),
        vp.id: ("operation", "JOIN_PE"),
    }
    return tree, assignment, tokens


class TestEvaluate:
    def test_conjoined_verbs_over_possessive_and_entity(self):
        tree, assignment, tokens = four_conjunct_case()
        out = evaluate(DOM, tree, assignment, tokens)
        assert isinstance(out, SemanticValue)
        expected = parse_meaning(
            "?x0 DIRECT.PREQUEL M0 AND ?x0 EDIT.PREQUEL M0 AND "
            "?x0 DIRECT M1 AND ?x0 EDIT M1")
        assert len(to_cnf(out)) == 4
        assert equivalent(out, expected)

    def test_minimal_wh_question(self):
        tokens = "who directed M0 ?".split()
        l = [leaf(i) for i in range(4)]
        l[1].label, l[2].label = 2, 1
        vp = merge(l[1], l[2], label=1)
        root = merge(l[0], merge(vp, l[3]))
        tree = SyntaxTree.assemble(root, 4)
        assignment = {
            l[1].id: ("primitive", "DIRECT"),
            l[2].id: ("primitive", "M0"),
            vp.id: ("operation", "JOIN_PE"),
        }
        out = evaluate(DOM, tree, assignment, tokens)
        assert isinstance(out, SemanticValue)
        assert to_cnf(out) == frozenset(
            [PathAtom(Var(0), ("DIRECT",), Ent("M0"))])

    def test_assert_frame(self):
        tokens = "is M0 an editor of M1 ?".split()
        l = [leaf(i) for i in range(7)]
        l[1].label, l[3].label, l[5].label = 1, 2, 1
        ofp = merge(l[3], merge(l[4], l[5]), label=1)   # editor of M1
        np_ = merge(l[2], ofp)                          # an <...> (unlabeled)
        top = merge(l[1], np_, label=1)
        root = merge(l[0], merge(top, l[6]))
        tree = SyntaxTree.assemble(root, 7)
        assignment = {
            l[1].id: ("primitive", "M0"),
            l[3].id: ("primitive", "EDIT"),
            l[5].id: ("primitive", "M1"),
            ofp.id: ("operation", "JOIN_PE"),
            top.id: ("operation", "AND_EE"),
        }
        out = evaluate(DOM, tree, assignment, tokens)
        assert isinstance(out, SemanticValue)
        assert to_cnf(out) == frozenset(
            [PathAtom(Ent("M0"), ("EDIT",), Ent("M1"))])

    def test_multiple_top_level_nodes_fail(self):
        tokens = "who directed M0 ?".split()
        l = [leaf(i) for i in range(4)]
        l[1].label, l[2].label = 2, 1
        root = merge(l[0], merge(merge(l[1], l[2]), l[3]))
        tree = SyntaxTree.assemble(root, 4)
        out = evaluate(DOM, tree, assignment={
            l[1].id: ("primitive", "DIRECT"),
            l[2].id: ("primitive", "M0"),
        }, tokens=tokens)
        assert isinstance(out, EvaluationFailure)
        assert "top-level" in out.reason

    def test_unknown_leading_token_fails(self):
        tokens = "maybe directed M0 ?".split()
        l = [leaf(i) for i in range(4)]
        l[2].label = 1
        root = merge(l[0], merge(merge(l[1], l[2], label=0), l[3]))
        tree = SyntaxTree.assemble(root, 4)
        out = evaluate(DOM, tree, {l[2].id: ("primitive", "M0")}, tokens)
        assert isinstance(out, EvaluationFailure)

    def test_context_free_subtree_value(self):
        # The same labeled subtree yields the same value wherever it sits.
        def embedded_possessive(prefix):
            # "<prefix tokens> M0 's prequel ?" with the possessive labeled
            tokens = prefix + ["M0", "'s", "prequel", "?"]
            k = len(prefix)
            leaves = [leaf(i) for i in range(len(tokens))]
            leaves[k].label, leaves[k + 2].label = 1, 2
            poss = merge(leaves[k], merge(leaves[k + 1], leaves[k + 2]), label=1)
            node = merge(poss, leaves[k + 3])
            for i in reversed(range(k)):
                node = merge(leaves[i], node)
            tree = SyntaxTree.assemble(node, len(tokens))
            assignment = {
                leaves[k].id: ("primitive", "M0"),
                leaves[k + 2].id: ("primitive", "PREQUEL"),
                poss.id: ("operation", "JOIN_EP"),
            }
            return poss, assignment

        node_a, assign_a = embedded_possessive(["who"])
        node_b, assign_b = embedded_possessive(["is", "M3", "an", "editor"])
        va = evaluate_value(DOM, node_a, assign_a)
        vb = evaluate_value(DOM, node_b, assign_b)
        assert va == vb


class TestHomomorphism:
    def test_algebraic_nodes_apply_operation_to_child_values(self):
        rng = np.random.default_rng(7)
        checked = 0
        for _ in range(60):
            tree, assignment, _tokens = random_cfq_case(DOM, rng)
            for node in tree.labeled_nodes:
                if not node.nt_children:
                    continue
                try:
                    whole = evaluate_value(DOM, node, assignment)
                except TypeMismatch:
                    continue
                op = DOM.operations[assignment[node.id][1]]
                args = [evaluate_value(DOM, c, assignment)
                        for c in sorted(node.nt_children, key=lambda n: n.lo)]
                assert whole == apply(op, args)
                checked += 1
        assert checked > 50

    def test_matches_brute_force_oracle_cfq(self):
        rng = np.random.default_rng(11)
        kinds = kind_letter_map(DOM)
        agree_success = 0
        for _ in range(300):
            tree, assignment, tokens = random_cfq_case(DOM, rng)
            expected = oracle_evaluate(kinds, tree, assignment, tokens, "cfq")
            got = evaluate(DOM, tree, assignment, tokens)
            if expected is None:
                assert isinstance(got, EvaluationFailure)
            else:
                assert isinstance(got, SemanticValue)
                oracle_prop = parse_meaning(" AND ".join(sorted(expected)))
                assert to_cnf(got) == to_cnf(oracle_prop)
                agree_success += 1
        assert agree_success > 100  # a healthy share must be evaluable

    def test_matches_brute_force_oracle_cogs(self):
        rng = np.random.default_rng(13)
        kinds = kind_letter_map(COGS)
        agree_success = 0
        for _ in range(200):
            tree, assignment, tokens = random_cogs_case(COGS, rng)
            expected = oracle_evaluate(kinds, tree, assignment, tokens, "cogs")
            got = evaluate(COGS, tree, assignment, tokens)
            if expected is None:
                assert isinstance(got, EvaluationFailure)
            else:
                assert isinstance(got, SemanticValue)
                oracle_prop = parse_meaning(" AND ".join(sorted(expected)))
                assert to_cnf(got) == to_cnf(oracle_prop)
                agree_success += 1
        assert agree_success > 60


class TestCogsOperations:
    def ev(self, pid):
        return COGS.primitive_value(pid, semalg.VarAlloc())

    def test_modifier_emits_path_atom(self):
        alloc = semalg.VarAlloc()
        cake = COGS.primitive_value("cake", alloc)
        table = COGS.primitive_value("table", alloc)
        out = apply(COGS.operations["ON"], [cake, table])
        (term,) = out.terms
        assert any(isinstance(a, PathAtom) and a.chain == ("ON",)
                   for a in term.atoms)

    def test_definite_noun_carries_presupposition(self):
        v = self.ev("def_cake")
        (term,) = v.terms
        attrs = {a.attr for a in term.atoms}
        assert attrs == {"CAKE", "DEF"}

    def test_role_pair_then_fill(self):
        alloc = semalg.VarAlloc()
        emma = COGS.primitive_value("Emma", alloc)
        cake = COGS.primitive_value("cake", alloc)
        give = COGS.primitive_value("give", alloc)
        pair = apply(COGS.operations["REC_THE"], [emma, cake])
        assert {t.role for t in pair.terms} == {"RECIPIENT", "THEME"}
        filled = apply(COGS.operations["FILL_AGENT_PE"], [give, pair])
        (frame,) = filled.terms
        assert frame.roles == frozenset({"RECIPIENT", "THEME"})
        roles_seen = {a.chain[0] for a in frame.atoms if isinstance(a, PathAtom)}
        assert roles_seen == {"RECIPIENT", "THEME"}

    def test_fill_role_conflict(self):
        alloc = semalg.VarAlloc()
        emma = COGS.primitive_value("Emma", alloc)
        liam = COGS.primitive_value("Liam", alloc)
        see = COGS.primitive_value("see", alloc)
        once = apply(COGS.operations["FILL_AGENT_PE"], [see, emma])
        with pytest.raises(TypeMismatch):
            apply(COGS.operations["FILL_AGENT_PE"], [once, liam])

    def test_clause_link(self):
        alloc = semalg.VarAlloc()
        hope = COGS.primitive_value("hope", alloc)
        see = COGS.primitive_value("see", alloc)
        out = apply(COGS.operations["CCOMP"], [hope, see])
        (frame,) = out.terms
        assert frame.pred == "HOPE"
        assert any(isinstance(a, PathAtom) and a.chain == ("CCOMP",)
                   for a in frame.atoms)
        assert any(isinstance(a, AttrAtom) and a.attr == "SEE"
                   for a in frame.atoms)


class TestCanonicalization:
    def test_to_cnf_idempotent(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            tree, assignment, tokens = random_cfq_case(DOM, rng)
            out = evaluate(DOM, tree, assignment, tokens)
            if isinstance(out, EvaluationFailure):
                continue
            once = to_cnf(out)
            again = to_cnf(SemanticValue(Kind.PROPOSITION, once))
            assert once == again

    def test_variable_renaming_invariance(self):
        p1 = parse_meaning("?x0 MARRY ?x1 AND ?x1 ATTR=ITALIAN")
        p2 = parse_meaning("?x0 MARRY ?x7 AND ?x7 ATTR=ITALIAN")
        assert bijection_equivalent(p1.terms, p2.terms)
        assert to_cnf(p1) == to_cnf(p2)

    def test_bijection_oracle_agrees_with_to_cnf(self):
        rng = np.random.default_rng(17)
        preds = ["P1", "P2", "P3"]
        for _ in range(200):
            n_vars = int(rng.integers(1, 4))
            n_atoms = int(rng.integers(1, 5))
            atoms1 = set()
            for _ in range(n_atoms):
                s = Var(int(rng.integers(n_vars)))
                o = (Var(int(rng.integers(n_vars))) if rng.random() < 0.5
                     else Ent(f"M{rng.integers(3)}"))
                atoms1.add(PathAtom(s, (preds[rng.integers(3)],), o))
            # the answer variable is pinned; only bound vars may permute
            remap = {0: 0}
            remap.update({i + 1: int(j) + 1 for i, j in
                          enumerate(rng.permutation(max(n_vars - 1, 0)))})
            atoms2 = {PathAtom(
                Var(remap[a.subject.index]), a.chain,
                Var(remap[a.obj.index]) if isinstance(a.obj, Var) else a.obj)
                for a in atoms1}
            p1 = SemanticValue(Kind.PROPOSITION, frozenset(atoms1))
            p2 = SemanticValue(Kind.PROPOSITION, frozenset(atoms2))
            assert bijection_equivalent(p1.terms, p2.terms)
            assert to_cnf(p1) == to_cnf(p2)

    def test_to_cnf_rejects_non_proposition(self):
        with pytest.raises(ValueError):
            to_cnf(prim_value("M0"))

    def test_answer_variable_never_renamed(self):
        # "who influenced a male": the answer must stay the INFLUENCE
        # subject; swapping ?x0 with the bound variable changes the question
        p = parse_meaning("?x0 INFLUENCE ?x5 AND ?x5 ATTR=MALE")
        canon = to_cnf(p)
        assert PathAtom(Var(0), ("INFLUENCE",), Var(1)) in canon
        assert AttrAtom(Var(1), "MALE") in canon
        swapped = parse_meaning("?x3 INFLUENCE ?x0 AND ?x0 ATTR=MALE")
        assert not equivalent(p, swapped)
        assert not bijection_equivalent(p.terms, swapped.terms)


class TestEquivalence:
    def test_reflexive(self):
        p = parse_meaning("?x0 DIRECT M1 AND ?x0 ATTR=ITALIAN")
        assert equivalent(p, p)

    def test_subset_not_equivalent(self):
        tree, assignment, tokens = four_conjunct_case()
        full = evaluate(DOM, tree, assignment, tokens)
        sub = SemanticValue(Kind.PROPOSITION,
                            frozenset(list(to_cnf(full))[:3]))
        assert not equivalent(full, sub)

    def test_conjunct_order_invariance(self):
        p1 = parse_meaning("?x0 DIRECT M1 AND ?x0 EDIT M0")
        p2 = parse_meaning("?x0 EDIT M0 AND ?x0 DIRECT M1")
        assert equivalent(p1, p2)
        assert bijection_equivalent(p1.terms, p2.terms)

    def test_symmetric_transitive_sample(self):
        rng = np.random.default_rng(23)
        props = []
        for _ in range(20):
            tree, assignment, tokens = random_cfq_case(DOM, rng)
            out = evaluate(DOM, tree, assignment, tokens)
            if isinstance(out, SemanticValue):
                props.append(out)
        for p in props:
            assert equivalent(p, p)
        for p, q in itertools.combinations(props[:8], 2):
            assert equivalent(p, q) == equivalent(q, p)
        for p, q, r in itertools.combinations(props[:6], 3):
            if equivalent(p, q) and equivalent(q, r):
                assert equivalent(p, r)


class TestMeaningGrammar:
    def test_round_trip(self):
        text = "?x0 DIRECT.PREQUEL M0 AND ?x0 EDIT M1"
        assert print_meaning(parse_meaning(text)) == \
            print_meaning(parse_meaning(print_meaning(parse_meaning(text))))

    def test_parse_positions(self):
        with pytest.raises(MeaningSyntaxError) as err:
            parse_meaning("?x0 DIRECT M0 AND banana")
        assert "banana" in str(err.value)

    def test_empty_rejected(self):
        with pytest.raises(MeaningSyntaxError):
            parse_meaning("   ")

    def test_bad_reference(self):
        with pytest.raises(MeaningSyntaxError):
            parse_meaning("?x0 DIRECT 0bad")

    def test_fuzz_round_trip(self):
        rng = np.random.default_rng(31)
        preds = ["DIRECT", "EDIT", "PREQUEL"]
        attrs = ["ITALIAN", "FEMALE"]
        for _ in range(500):
            n = int(rng.integers(1, 6))
            atoms = set()
            for _ in range(n):
                s = Var(int(rng.integers(3))) if rng.random() < 0.6 \
                    else Ent(f"M{rng.integers(4)}")
                if rng.random() < 0.3:
                    atoms.add(AttrAtom(s, attrs[rng.integers(2)]))
                else:
                    chain = tuple(preds[rng.integers(3)]
                                  for _ in range(rng.integers(1, 3)))
                    o = Var(int(rng.integers(3))) if rng.random() < 0.4 \
                        else Ent(f"M{rng.integers(4)}")
                    atoms.add(PathAtom(s, chain, o))
            p = SemanticValue(Kind.PROPOSITION, frozenset(atoms))
            text = print_meaning(p)
            assert print_meaning(parse_meaning(text)) == text

    def test_primitives_extraction(self):
        p = parse_meaning("?x0 DIRECT.PREQUEL M0 AND ?x0 ATTR=ITALIAN")
        assert meaning_primitives(p) == frozenset(
            {"DIRECT", "PREQUEL", "M0", "ITALIAN"})
