import pytest

from miivgraph import ParseError, emit_model, parse_model, validate
from miivgraph.generators import random_sem_model

from conftest import POLITICAL_DEMOCRACY, structurally_equal


def diagnostics_of(text):
    with pytest.raises(ParseError) as err:
        parse_model(text)
    return err.value.diagnostics


class TestGrammar:
    def test_political_democracy_structure(self):
        m = parse_model(POLITICAL_DEMOCRACY)
        g = m.diagram
        assert set(m.latents) == {"l1", "l2"}
        assert set(m.observed) == {f"y{i}" for i in range(1, 8)}
        assert m.scaling == {"l1": "y1", "l2": "y4"}
        assert g.edge("l1", "y1").param.fixed == 1.0
        assert g.edge("l1", "y2").param.is_free
        assert g.has_edge("l1", "l2")
        assert validate(m) == []

    def test_fixed_coefficient_prefix(self):
        m = parse_model("l1 =~ 1*y1 + 0.5*y2\n")
        assert m.diagram.edge("l1", "y2").param.fixed == 0.5
        assert m.scaling == {"l1": "y1"}

    def test_named_coefficient(self):
        m = parse_model("l1 =~ y1 + lam*y2\n")
        p = m.diagram.edge("l1", "y2").param
        assert p.label == "lam" and p.is_free

    def test_error_covariance_lands_on_error_nodes(self):
        m = parse_model("y1 ~~ y2\ny3 ~ y1 + y2\n")
        (b,) = m.diagram.bi_edges
        assert {b.a, b.b} == {"eps_y1", "eps_y2"}

    def test_variance_statement(self):
        m = parse_model("l1 =~ y1 + y2\ny1 ~~ 2.5*y1\n")
        err = m.diagram.error_parent("y1")
        assert m.diagram.variance_param(err).fixed == 2.5

    def test_comments_and_whitespace(self):
        m1 = parse_model("l1 =~ y1+y2   # indicators\n\n  l1   ~~  2*l1\n")
        m2 = parse_model("l1 =~ y1 + y2\nl1 ~~ 2*l1\n")
        assert structurally_equal(m1, m2)

    def test_statement_order_insensitive_for_structure(self):
        m1 = parse_model("l1 =~ y1 + y2\ny3 ~ l1\n")
        m2 = parse_model("y3 ~ l1\nl1 =~ y1 + y2\n")
        assert structurally_equal(m1, m2)

    def test_semicolons_split_statements(self):
        m = parse_model("l1 =~ y1 + y2; y3 ~ l1\n")
        assert m.diagram.has_edge("l1", "y3")


class TestDiagnostics:
    def test_cycle(self):
        diags = diagnostics_of("y2 ~ y1\ny1 ~ y2\n")
        assert any("cycle" in d.message for d in diags)

    def test_unknown_operator(self):
        diags = diagnostics_of("y1 <- y2\n")
        assert any("operator" in d.message for d in diags)
        assert diags[0].line == 1

    def test_duplicate_edge(self):
        diags = diagnostics_of("l1 =~ y1 + y2\nl1 =~ y2\n")
        assert any("duplicate arrow" in d.message for d in diags)
        assert any(d.line == 2 for d in diags)

    def test_latent_without_unit_loading(self):
        diags = diagnostics_of("l1 =~ 0.9*y1 + lam*y2\n")
        assert any("scaling indicator" in d.message for d in diags)

    def test_non_unit_first_loading_shifts_scaling(self):
        m = parse_model("l1 =~ 0.9*y1 + 1*y2\n")
        assert m.scaling == {"l1": "y2"}

    def test_duplicate_label(self):
        diags = diagnostics_of("y3 ~ b*y1 + b*y2\n")
        assert any("already used" in d.message for d in diags)

    def test_reserved_names(self):
        diags = diagnostics_of("eps_y1 ~ y2\n")
        assert any("reserved" in d.message for d in diags)

    def test_positions_inside_source(self):
        text = "l1 =~ y1 + y2\nl1 =~ y1\n"
        for d in diagnostics_of(text):
            lines = text.splitlines()
            assert 1 <= d.line <= len(lines)
            assert 1 <= d.column <= len(lines[d.line - 1]) + 1

    def test_rendering(self):
        diags = diagnostics_of("y2 ~ y1\ny1 ~ y2\n")
        assert str(diags[0]).count(":") >= 3  # line:col: severity: message


class TestEmit:
    def test_empty_round_trip(self):
        m = parse_model("")
        assert emit_model(m) == ""
        assert structurally_equal(parse_model(emit_model(m)), m)

    def test_covariance_line_present(self):
        m = parse_model("y1 ~~ y2\ny3 ~ y1 + y2\n")
        assert "y1 ~~ y2" in emit_model(m)

    def test_golden_round_trip(self, whole_equation_model):
        again = parse_model(emit_model(whole_equation_model))
        assert structurally_equal(whole_equation_model, again)

    @pytest.mark.parametrize("seed", range(40))
    def test_random_round_trip(self, seed):
        model = random_sem_model(seed)
        again = parse_model(emit_model(model))
        assert structurally_equal(model, again)
