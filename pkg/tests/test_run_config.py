import math

import pytest
from pydantic import ValidationError

from models.errors import UsageError
from models.run_config import RunConfig, parse_m_expression


class TestMExpression:
    def test_plain_values(self):
        assert parse_m_expression("1.5") == [1.5]
        assert parse_m_expression("0.5, 1,10") == [0.5, 1.0, 10.0]

    def test_m0_multiples(self):
        assert parse_m_expression("2m0", lambda: 1.5) == [3.0]
        assert parse_m_expression("m0,0.5m0", lambda: 2.0) == [2.0, 1.0]

    def test_m0_without_resolver_parses_as_nan(self):
        values = parse_m_expression("0.5m0,1")
        assert math.isnan(values[0])
        assert values[1] == 1.0

    def test_log_grid(self):
        values = parse_m_expression("log:1:100:3")
        assert values == pytest.approx([1.0, 10.0, 100.0])
        values = parse_m_expression("log:1.01m0:1e6:40", lambda: 1.85)
        assert len(values) == 40
        assert values[0] == pytest.approx(1.01 * 1.85)
        assert values[-1] == pytest.approx(1e6)

    def test_log_grid_with_m0_endpoint_defers_without_resolver(self):
        values = parse_m_expression("log:0.5m0:10:4")
        assert len(values) == 4
        assert all(math.isnan(v) for v in values)

    @pytest.mark.parametrize("text", ["log:-1:2:3", "log:0:10:3", "log:1:-5:2"])
    def test_log_grid_endpoints_checked_without_resolver(self, text):
        with pytest.raises(UsageError):
            parse_m_expression(text)

    @pytest.mark.parametrize("text", ["", "abc", "log:1:2", "log:1:2:x", "log:1:2:0", "log:-1:2:3", "1em0",
                                      "nan", "inf"])
    def test_rejects_bad_expressions(self, text):
        with pytest.raises(UsageError):
            parse_m_expression(text, lambda: 1.0)


class TestRunConfig:
    def test_defaults(self):
        cfg = RunConfig(command="eigen")
        assert (cfg.n, cfg.R, cfg.f) == (2, 1.0, [1.0])
        assert (cfg.n_r, cfg.n_theta, cfg.dt, cfg.order) == (48, 192, 0.02, 2)
        assert cfg.m_values(lambda: 1.0) == []

    def test_coercions(self):
        cfg = RunConfig(command="stability", f="1,0,-1", m=2)
        assert cfg.f == [1.0, 0.0, -1.0]
        assert cfg.m == "2"
        assert cfg.source().coefficients == (1.0, 0.0, -1.0)
        assert cfg.ball().perimeter == pytest.approx(2.0 * math.pi)

    def test_grid_takes_precedence(self):
        cfg = RunConfig(command="eigen", m="3", m_grid="2m0,4m0")
        assert cfg.m_values(lambda: 1.0, grid=True) == [2.0, 4.0]
        assert cfg.m_values(lambda: 1.0) == [3.0]

    @pytest.mark.parametrize("overrides", [
        {"m": "-1"},
        {"m": "log:1:2"},
        {"m_grid": "log:0:10:3"},
        {"n": 1},
        {"R": 0.0},
        {"f": []},
        {"s": 2, "n_theta": 190},
        {"a": 2.0, "t": 0.15},
        {"dt": 0.1},
        {"order": 3},
        {"unknown": 1},
    ])
    def test_rejects_invalid(self, overrides):
        with pytest.raises(ValidationError):
            RunConfig(command="fem-verify", **overrides)

    def test_yaml_round_trip(self):
        cfg = RunConfig(command="fem-verify", problem="eigen", m_grid="0.5m0,2m0", n_r=24, n_theta=96)
        assert RunConfig.from_yaml(cfg.to_yaml()) == cfg

    def test_yaml_must_be_mapping(self):
        with pytest.raises(UsageError):
            RunConfig.from_yaml("- 1\n- 2\n")
