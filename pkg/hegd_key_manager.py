#!/usr/bin/env python3
###
# Copyright (c) 1999-2025, Juniper Networks Inc.
#
#  All rights reserved.
#
#  License: Apache 2.0
#
#  THIS SOFTWARE IS PROVIDED BY Juniper Networks Inc. ''AS IS'' AND ANY
#  EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE IMPLIED
#  WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE ARE
#  DISCLAIMED. IN NO EVENT SHALL Juniper Networks Inc. BE LIABLE FOR ANY
#  DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL DAMAGES
#  (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR SERVICES;
#  LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER CAUSED AND
#  ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY, OR TORT
#  (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE OF THIS
#  SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.
###

import argparse
import json
import logging
import os
import secrets
import shutil
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict

import numpy as np

from utils import codec
from utils.ckks import EvaluationKeys, KeySet, keygen
from utils.config import PresetSpec, resolve_preset
from utils.errors import ContractViolation

log = logging.getLogger('hegd.keys')

KEYS_DIR = os.getenv('HEGD_KEYS_DIR', '.hegd-keys')
PARAMS_FILE = "params.json"
KEY_FILES = {
    "secret": "secret.key",
    "public": "public.key",
    "relin": "relin.key",
    "galois": "galois.key",
}


def _key_dir(key_id: str, root: str | Path | None = None) -> Path:
    return Path(root or KEYS_DIR) / key_id


def load_manifest(key_id: str, root: str | Path | None = None) -> Dict[str, Any]:
    """Read params.json for a key set, empty dict if it doesn't exist"""
    path = _key_dir(key_id, root) / PARAMS_FILE
    if not path.exists():
        return {}
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError:
        return {}


def save_key_set(keys: KeySet, key_id: str, preset_name: str, rotation_limit: int | None,
                 description: str | None = None, root: str | Path | None = None) -> Path:
    """Write every key of ``keys`` plus a params.json manifest"""
    directory = _key_dir(key_id, root)
    directory.mkdir(parents=True, exist_ok=True)
    params = keys.params
    manifest = {
        "id": key_id,
        "preset": preset_name,
        "n": params.n,
        "depth": params.depth,
        "scale_bits": params.scale_bits,
        "security_preset": params.security_preset.value,
        "primes": [p.value for p in params.basis.primes],
        "rotation_limit": rotation_limit,
        "rotation_steps": keys.galois.steps,
        "description": description or f"Keys for {preset_name}",
        "created": datetime.now(timezone.utc).isoformat(),
    }
    for field, filename in KEY_FILES.items():
        codec.save(getattr(keys, field), directory / filename)
    with open(directory / PARAMS_FILE, 'w') as f:
        json.dump(manifest, f, indent=2)
    log.info(f"Saved key set '{key_id}' to {directory}")
    return directory


def load_key_set(key_id: str, root: str | Path | None = None,
                 include_secret: bool = True) -> KeySet | EvaluationKeys:
    """Load a saved key set; without the secret only the evaluation keys are returned

    Raises:
        ContractViolation: the key files were generated for different parameters
        OSError: the directory or one of its files is missing
    """
    directory = _key_dir(key_id, root)
    if not directory.is_dir():
        raise FileNotFoundError(f"Key set '{key_id}' not found under {directory.parent}")
    fields = [f for f in KEY_FILES if include_secret or f != "secret"]
    loaded = {f: codec.load(directory / KEY_FILES[f]) for f in fields}

    params = loaded["public"].params
    mismatched = [f for f, key in loaded.items() if key.params != params]
    if mismatched:
        raise ContractViolation(f"Key set '{key_id}' mixes parameter sets: {', '.join(mismatched)}")

    if include_secret:
        return KeySet(loaded["secret"], loaded["public"], loaded["relin"], loaded["galois"])
    return EvaluationKeys(loaded["public"], loaded["relin"], loaded["galois"])


def generate_keys(preset: PresetSpec, seed: int | None = None,
                  rotation_limit: int | None = None) -> KeySet:
    """Fresh key material; a random 64-bit seed is drawn when none is given"""
    params = preset.to_params()
    seed = secrets.randbits(64) if seed is None else seed
    return keygen(params, np.random.default_rng(seed), rotation_limit=rotation_limit)


def generate_keys_command(key_id: str, preset_name: str, rotation_limit: int | None = None,
                          seed: int | None = None, description: str | None = None,
                          root: str | Path | None = None) -> None:
    """Generate and store a new key set"""
    if load_manifest(key_id, root):
        print(f"Error: Key set '{key_id}' already exists")
        sys.exit(1)

    preset = resolve_preset(preset_name)
    keys = generate_keys(preset, seed, rotation_limit)
    directory = save_key_set(keys, key_id, preset_name, rotation_limit, description, root)

    print(f"Generated new key set:")
    print(f"  ID: {key_id}")
    print(f"  Preset: {preset_name} (N={preset.n}, depth={preset.depth}, scale=2^{preset.scale_bits})")
    print(f"  Rotation steps: {len(keys.galois.steps)}")
    print(f"  Directory: {directory}")
    print(f"\nKeep {KEY_FILES['secret']} private - evaluators only need the other files!")


def list_keys_command(root: str | Path | None = None) -> None:
    """List all stored key sets"""
    base = Path(root or KEYS_DIR)
    manifests = [load_manifest(p.name, base) for p in sorted(base.iterdir()) if p.is_dir()] if base.is_dir() else []
    manifests = [m for m in manifests if m]

    if not manifests:
        print("No key sets found")
        return

    print(f"{'ID':<20} {'Preset':<15} {'N':<7} {'Depth':<6} {'Created':<25}")
    print("-" * 75)
    for manifest in manifests:
        print(f"{manifest['id']:<20} {manifest.get('preset', '?'):<15} {manifest.get('n', '?'):<7} "
              f"{manifest.get('depth', '?'):<6} {manifest.get('created', 'Unknown'):<25}")


def show_keys_command(key_id: str, root: str | Path | None = None) -> None:
    """Show the parameters of one key set"""
    manifest = load_manifest(key_id, root)
    if not manifest:
        print(f"Error: Key set '{key_id}' not found")
        sys.exit(1)

    print(f"Key set ID: {key_id}")
    print(f"Description: {manifest.get('description', 'No description')}")
    print(f"Security preset: {manifest.get('security_preset')}")
    print(f"Ring degree: {manifest.get('n')}")
    print(f"Depth: {manifest.get('depth')}")
    print(f"Scale bits: {manifest.get('scale_bits')}")
    print(f"Modulus chain: {len(manifest.get('primes', []))} primes")
    print(f"Rotation steps: {manifest.get('rotation_steps')}")
    print(f"Created: {manifest.get('created', 'Unknown')}")


def revoke_keys_command(key_id: str, root: str | Path | None = None) -> None:
    """Delete a key set"""
    directory = _key_dir(key_id, root)
    if not directory.is_dir():
        print(f"Error: Key set '{key_id}' not found")
        sys.exit(1)
    shutil.rmtree(directory)
    print(f"Key set '{key_id}' has been deleted")


def main():
    parser = argparse.ArgumentParser(
        description="HE-GD Key Manager",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s generate --id "bench-d4" --preset insecure-test --rotation-limit 16
  %(prog)s generate --id "prod" --preset secure128
  %(prog)s list
  %(prog)s show --id "bench-d4"
  %(prog)s revoke --id "bench-d4"
        """
    )
    parser.add_argument('--root', default=None, help=f'Key store directory (default: {KEYS_DIR})')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    generate_parser = subparsers.add_parser('generate', help='Generate a new key set')
    generate_parser.add_argument('--id', required=True, help='Unique identifier for the key set')
    generate_parser.add_argument('--preset', default='insecure-test',
                                 help='Built-in preset name or JSON/YAML preset file')
    generate_parser.add_argument('--rotation-limit', type=int, default=None,
                                 help='Only generate rotation keys for steps below this bound (e.g. d*d)')
    generate_parser.add_argument('--seed', type=int, default=None, help='Deterministic keygen seed (testing only)')
    generate_parser.add_argument('--description', help='Description of the key set')

    subparsers.add_parser('list', help='List all key sets')

    show_parser = subparsers.add_parser('show', help='Show the parameters of a key set')
    show_parser.add_argument('--id', required=True, help='Key set ID to show')

    revoke_parser = subparsers.add_parser('revoke', help='Delete a key set')
    revoke_parser.add_argument('--id', required=True, help='Key set ID to delete')

    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    if not args.command:
        parser.print_help()
        sys.exit(1)

    try:
        if args.command == 'generate':
            generate_keys_command(args.id, args.preset, args.rotation_limit, args.seed, args.description, args.root)
        elif args.command == 'list':
            list_keys_command(args.root)
        elif args.command == 'show':
            show_keys_command(args.id, args.root)
        elif args.command == 'revoke':
            revoke_keys_command(args.id, args.root)
    except KeyboardInterrupt:
        print("\nOperation cancelled")
        sys.exit(1)
    except Exception as e:
        print(f"Error: {e}")
        sys.exit(1)


if __name__ == '__main__':
    main()
