"""Regenerate the bundled test fixtures under tests/fixtures."""
import hashlib
from pathlib import Path

from tsisc.events import noisy_preset, write_binary

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    header, events = noisy_preset("edge", noise_hz=5.0, seed=1)
    path = FIXTURES / "edge_noise_5hz.evb"
    write_binary(header, events, path)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    print(f"{path.name}: {events.size} events, sha256 {digest}")


if __name__ == "__main__":
    main()
