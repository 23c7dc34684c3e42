"""Scenario configuration files: flat key-value text with per-module sections.

Four presets (a, b, c, d) ship with the package:

  a  deterministic settings fixed long before the emission (block-static)
  b  settings varied periodically by function generators
  c  settings chosen randomly near the source after the emission
  d  random settings space-like separated from the emission and from the
     remote measurement (the flagship arrangement)

Presets b, c and d share the paper-scale link geometry; rates, attenuations
and visibilities are calibration values chosen so each scenario lands on its
documented Bell value and precision.
"""

from __future__ import annotations

import configparser
import hashlib
from importlib import resources
from pathlib import Path

from .errors import ConfigurationError
from .photonsim import (
    ChannelConfig,
    GatingConfig,
    HiddenVariableMode,
    ScenarioConfig,
)
from .randomness import Periodic, Predetermined, QuantumToggle, SettingSource
from .spacetime import ScenarioGeometry

PRESET_NAMES = ("a", "b", "c", "d")


def preset_text(name: str) -> str:
    """Raw text of a shipped scenario preset."""
    if name not in PRESET_NAMES:
        raise ConfigurationError(
            f"unknown scenario preset {name!r}; choose from {PRESET_NAMES}"
        )
    return (
        resources.files("bellsim.presets").joinpath(f"scenario_{name}.ini").read_text()
    )


def config_hash(text: str) -> str:
    """Stable identifier of a configuration's content."""
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse a scenario configuration file."""
    text = Path(path).read_text()
    return parse_config(text)


def load_preset(name: str) -> ScenarioConfig:
    return parse_config(preset_text(name))


def _setting_source(section, side: str, sample_rate_hz: float) -> SettingSource:
    mode = section.get(f"{side}_mode", "quantum_toggle").strip()
    if mode == "quantum_toggle":
        rate = float(section.get(f"{side}_toggle_rate_hz", "30e6"))
        return SettingSource(QuantumToggle(rate), sample_rate_hz)
    if mode == "periodic":
        frequency = float(section.get(f"{side}_frequency_hz", str(sample_rate_hz)))
        phase = float(section.get(f"{side}_phase", "0"))
        return SettingSource(Periodic(frequency, phase), sample_rate_hz)
    if mode == "predetermined":
        raw = section.get(f"{side}_bits", "")
        try:
            bits = tuple(int(b) for b in raw.replace(" ", "").split(",") if b != "")
        except ValueError as exc:
            raise ConfigurationError(f"bad {side}_bits list: {raw!r}") from exc
        if not bits:
            raise ConfigurationError(f"predetermined mode needs {side}_bits")
        return SettingSource(Predetermined(bits), sample_rate_hz)
    raise ConfigurationError(f"unknown setting mode {mode!r} for {side}")


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"cannot parse configuration: {exc}") from exc

    try:
        scenario = parser["scenario"]
        source = parser["source"]
        channels = parser["channels"]
        analyzer = parser["analyzer"]
        geometry_section = parser["geometry"]
        randomness = parser["randomness"]
    except KeyError as exc:
        raise ConfigurationError(f"missing configuration section {exc}") from exc

    sample_rate = float(randomness.get("sample_rate_hz", "1e6"))
    geometry = ScenarioGeometry(
        link_distance_m=float(geometry_section.get("link_distance_m", "143.6e3")),
        alice_delay_s=float(channels.get("alice_delay_s", "29.6e-6")),
        bob_delay_s=float(channels.get("bob_delay_s", "479e-6")),
        qrng_alice_position_m=float(
            geometry_section.get("qrng_alice_position_m", "-1.2e3")
        ),
        radio_link_s=float(geometry_section.get("radio_link_s", "3.9e-6")),
        electronics_s=float(geometry_section.get("electronics_s", "0.6e-6")),
        electronic_delay_s=float(
            geometry_section.get("electronic_delay_s", "24.6e-6")
        ),
        setting_interval_s=1.0 / sample_rate,
        slack_s=float(geometry_section.get("slack_s", "0.3e-6")),
        choice_arrangement=geometry_section.get("choice_arrangement", "delayed"),
        choice_past_time_s=float(
            geometry_section.get("choice_past_time_s", "-1e-3")
        ),
    )

    mode_name = scenario.get("hidden_variable_mode", "quantum").strip()
    try:
        hv_mode = HiddenVariableMode(mode_name)
    except ValueError as exc:
        raise ConfigurationError(f"unknown hidden_variable_mode {mode_name!r}") from exc

    signaling_raw = scenario.get("signaling_speed_m_s", "").strip()
    fiber_end_raw = channels.get("fiber_visibility_end", "").strip()

    return ScenarioConfig(
        name=scenario.get("name", "custom"),
        pair_rate_local_hz=float(source.get("pair_rate_local_hz", "2.5e6")),
        alice_channel=ChannelConfig(
            delay_s=float(channels.get("alice_delay_s", "29.6e-6")),
            attenuation_db=float(channels.get("alice_attenuation_db", "20")),
        ),
        bob_channel=ChannelConfig(
            delay_s=float(channels.get("bob_delay_s", "479e-6")),
            attenuation_db=float(channels.get("bob_attenuation_db", "35")),
        ),
        coincidence_window_s=float(analyzer.get("coincidence_window_s", "1.5e-9")),
        dark_rate_alice_hz=float(analyzer.get("dark_rate_alice_hz", "500")),
        dark_rate_bob_hz=float(analyzer.get("dark_rate_bob_hz", "12400")),
        source_visibility_hv=float(source.get("visibility_hv", "0.99")),
        source_visibility_diag=float(source.get("visibility_diag", "0.98")),
        analyzer_visibility=float(analyzer.get("visibility", "0.99")),
        fiber_visibility=float(channels.get("fiber_visibility", "0.97")),
        fiber_visibility_end=float(fiber_end_raw) if fiber_end_raw else None,
        alice_source=_setting_source(randomness, "alice", sample_rate),
        bob_source=_setting_source(randomness, "bob", sample_rate),
        gating=GatingConfig(
            rise_time_s=float(analyzer.get("rise_time_s", "15e-9")),
            discard_window_s=float(analyzer.get("discard_window_s", "35e-9")),
            toggle_rate_hz=sample_rate,
        ),
        geometry=geometry,
        hidden_variable_mode=hv_mode,
        signaling_speed_m_s=float(signaling_raw) if signaling_raw else None,
        run_duration_s=float(scenario.get("duration_s", "2400")),
    )
