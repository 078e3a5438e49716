"""
Parameter preset validation and runtime configuration helpers
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict

import psutil
import yaml
from pydantic import BaseModel, Field, ValidationError

from utils.ckks import MAX_MODULUS_BITS_128, CkksParams, SecurityPreset, minimum_ring_degree
from utils.errors import PresetError
from utils.ring import MAX_PRIME_BITS

log = logging.getLogger('hegd.config')

WORKERS_ENV = 'HEGD_WORKERS'


class PresetSpec(BaseModel):
    """Parameter preset document: {n, depth, scale_bits, security_preset}"""
    n: int = Field(description="Ring degree, a power of two")
    depth: int = Field(ge=0, le=40, description="Number of rescaling levels")
    scale_bits: int = Field(default=40, ge=20, le=58, description="p with scale 2^p")
    security_preset: SecurityPreset = Field(default=SecurityPreset.SECURE128)

    @property
    def estimated_modulus_bits(self) -> int:
        head = min(self.scale_bits + 10, MAX_PRIME_BITS)
        return 2 * head + self.depth * self.scale_bits

    def to_params(self) -> CkksParams:
        """Build CkksParams; choosing insecure-test here counts as the explicit opt-in"""
        return CkksParams.create(
            n=self.n,
            depth=self.depth,
            scale_bits=self.scale_bits,
            security_preset=self.security_preset,
            allow_insecure=self.security_preset is SecurityPreset.INSECURE_TEST,
        )


BUILTIN_PRESETS: Dict[str, PresetSpec] = {
    "secure128": PresetSpec(n=32768, depth=18, scale_bits=40, security_preset=SecurityPreset.SECURE128),
    "insecure-test": PresetSpec(n=8192, depth=18, scale_bits=40, security_preset=SecurityPreset.INSECURE_TEST),
}


def validate_preset(preset_name: str, preset_config: Dict[str, Any]) -> PresetSpec:
    """Validate a preset document

    Args:
        preset_name: Name used in error messages
        preset_config: Parsed JSON/YAML mapping

    Returns:
        The validated preset

    Raises:
        PresetError: If required fields are missing or the values are inconsistent
    """
    required_fields = ['n', 'depth']
    missing_fields = [f for f in required_fields if f not in preset_config]
    if missing_fields:
        raise PresetError(
            f"Preset '{preset_name}' missing required fields: {', '.join(missing_fields)}. "
            f"Expected format: {{'n': 8192, 'depth': 18, 'scale_bits': 40, 'security_preset': 'secure128'}}"
        )

    n = preset_config['n']
    if not isinstance(n, int) or n < 2 or n & (n - 1):
        raise PresetError(f"Preset '{preset_name}' has invalid 'n' value {n!r}. Expected a power of two")

    try:
        spec = PresetSpec.model_validate(preset_config)
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise PresetError(f"Preset '{preset_name}' is invalid: {details}") from e

    if spec.security_preset is SecurityPreset.SECURE128:
        bound = MAX_MODULUS_BITS_128.get(spec.n)
        bits = spec.estimated_modulus_bits
        if bound is None or bits > bound:
            raise PresetError(
                f"Preset '{preset_name}' needs {bits} modulus bits, above the 128-bit bound for N={spec.n}. "
                f"Expected N >= {minimum_ring_degree(bits)} or a smaller depth"
            )

    log.debug(f"Preset '{preset_name}' validated successfully")
    return spec


def validate_all_presets(presets: Dict[str, Dict[str, Any]]) -> Dict[str, PresetSpec]:
    """Validate every preset in a mapping, reporting all failures together

    Raises:
        PresetError: If any preset is invalid
    """
    if not presets:
        log.warning("No presets defined")
        return {}

    validated = {}
    errors = []
    for preset_name, preset_config in presets.items():
        try:
            validated[preset_name] = validate_preset(preset_name, preset_config)
        except PresetError as e:
            errors.append(str(e))

    if errors:
        raise PresetError("Preset validation failed:\n" + "\n".join(f"  - {e}" for e in errors))

    log.info(f"All {len(presets)} preset(s) validated successfully")
    return validated


def load_preset(path: str | Path) -> PresetSpec:
    """Load a single preset from a JSON or YAML file

    Raises:
        PresetError: If the document is not a mapping or fails validation
        OSError: If the file cannot be read
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() in ('.yaml', '.yml'):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise PresetError(f"File {path} is not a valid preset document: {e}") from e
    if not isinstance(data, dict):
        raise PresetError(f"File {path} must contain a mapping, got {type(data).__name__}")
    return validate_preset(path.stem, data)


def resolve_preset(name_or_path: str) -> PresetSpec:
    """Built-in preset by name, otherwise a preset file"""
    if name_or_path in BUILTIN_PRESETS:
        return BUILTIN_PRESETS[name_or_path]
    if not Path(name_or_path).exists():
        raise PresetError(
            f"Unknown preset '{name_or_path}'. Expected one of {', '.join(BUILTIN_PRESETS)} or a JSON/YAML file"
        )
    return load_preset(name_or_path)


def get_workers_with_fallback(arguments_workers: int | None = None) -> int:
    """Worker pool size with fallback priority: arguments -> ENV -> physical CPU count"""
    if arguments_workers is not None:
        return max(1, arguments_workers)

    env_workers = os.getenv(WORKERS_ENV)
    if env_workers is not None:
        try:
            return max(1, int(env_workers))
        except ValueError:
            log.warning(f"Invalid {WORKERS_ENV} environment variable value: {env_workers}. Using CPU count.")

    return psutil.cpu_count(logical=False) or 1
