import pytest
from pydantic import ValidationError

import scottrank
from scottrank.base import automorphism_group, pure_set
from scottrank.configs import Caps, RunConfig, _load_caps, use_caps
from scottrank.constants import DEFAULT_CAP_UNIVERSE
from scottrank.utils import CapExceeded


@pytest.fixture(autouse=True)
def reset_config():
    scottrank.config()
    yield
    scottrank.config()


def test_defaults():
    caps = _load_caps()
    assert caps.universe == DEFAULT_CAP_UNIVERSE
    assert caps.zk == 64
    assert caps.margin == 2


def test_precedence(monkeypatch):
    monkeypatch.setenv("SCOTTRANK_CAP_UNIVERSE", "5")
    assert _load_caps().universe == 5

    scottrank.config(universe=6)
    assert _load_caps().universe == 6

    assert _load_caps(Caps(universe=7)).universe == 7


def test_use_caps_injects_caps():
    @use_caps
    def universe_cap(*, caps: Caps = None):
        return caps.universe

    assert universe_cap() == DEFAULT_CAP_UNIVERSE
    assert universe_cap(caps=Caps(universe=3)) == 3
    scottrank.config(universe=4)
    assert universe_cap() == 4


def test_caps_reach_operations():
    automorphism_group(pure_set(4))
    with pytest.raises(CapExceeded):
        automorphism_group(pure_set(4), caps=Caps(universe=3))
    scottrank.config(universe=3)
    with pytest.raises(CapExceeded):
        automorphism_group(pure_set(4))


def test_invalid_caps():
    with pytest.raises(ValidationError):
        Caps(universe=0)
    with pytest.raises(ValidationError):
        Caps(margin=-1)


def test_derived_caps():
    caps = Caps(universe=5, build=100, zk=8)
    assert caps.doubled_zk().zk == 16
    assert caps.for_builds().universe == 100
    assert caps.universe == 5


def test_run_config():
    config = RunConfig(command="verify")
    assert config.format == "text"
    assert config.seed == 0
    with pytest.raises(ValidationError):
        RunConfig(command="verify", format="yaml")
    with pytest.raises(ValidationError):
        RunConfig(command="verify", truncate=0)
