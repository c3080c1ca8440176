"""Write the shipped fleet manifests into src/oidc_testbed/data/."""
import argparse

from oidc_testbed.fleet import REPLICA_SEED, hardened_fleet, replica_fleet
from oidc_testbed.manifest import HARDENED_MANIFEST, REPLICA_MANIFEST


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=REPLICA_SEED)
    args = parser.parse_args()
    REPLICA_MANIFEST.parent.mkdir(parents=True, exist_ok=True)
    for path, manifest in ((REPLICA_MANIFEST, replica_fleet(args.seed)), (HARDENED_MANIFEST, hardened_fleet(args.seed))):
        path.write_text(manifest.dumps())
        print(f"wrote {path} ({len(manifest.rps)} RPs)")


if __name__ == "__main__":
    main()
