"""Scan the replica fleet and print the expected counts next to the measured ones."""
import argparse
import time

from oidc_testbed.manifest import REPLICA_MANIFEST, load_manifest
from oidc_testbed.scanner import aggregate_fleet, hybrid_submission_counts, out_of, scan_fleet

# (flow, class, statistic, expected count)
EXPECTED = [
    ("Hybrid", "google-id-auth", "confirmed", 3),
    ("Hybrid", "google-id-auth", "observed", 6),
    ("Hybrid", "unverified-token-auth", "observed", 19),
    ("Hybrid", "unverified-token-auth", "confirmed", 13),
    ("Hybrid", "token-sniffable", "signin-submission", 4),
    ("Hybrid", "token-sniffable", "cookie", 1),
    ("Hybrid", "privacy-leak", "confirmed", 7),
    ("Hybrid", "session-swap", "confirmed", 24),
    ("Hybrid", "session-swap", "single-use-code", 8),
    ("Hybrid", "session-swap", "reusable-credential", 16),
    ("AuthorizationCode", "token-to-browser", "confirmed", 4),
    ("AuthorizationCode", "privacy-leak", "confirmed", 11),
    ("AuthorizationCode", "session-swap", "confirmed", 24),
    ("AuthorizationCode", "forced-login-csrf", "confirmed", 24),
    ("AuthorizationCode", "xss-token-theft", "confirmed", 69),
]
# hybrid submission details: key -> (expected count, population)
EXPECTED_HYBRID = {"customised": (23, 33), "extra_evidence": (3, 13), "post_without_state": (14, 33)}


def measured(report, flow, cls, stat):
    st = report.get(flow, cls)
    if stat in ("confirmed", "observed"):
        return getattr(st, stat)
    return st.vectors.get(stat, 0)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", default=str(REPLICA_MANIFEST))
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    manifest = load_manifest(args.manifest)
    t0 = time.perf_counter()
    results = scan_fleet(manifest.rps, manifest.environment, jobs=args.jobs)
    report = aggregate_fleet({r.config.name: r.findings for r in results}, manifest.rps)
    elapsed = time.perf_counter() - t0
    print(report.to_table())
    bad = 0
    for flow, cls, stat, want in EXPECTED:
        got = measured(report, flow, cls, stat)
        pop = report.populations[flow]
        mark = "ok " if got == want else "BAD"
        bad += got != want
        print(f"{mark} {flow:<17} {cls:<22} {stat:<20} expected {out_of(want, pop):<20} measured {out_of(got, pop)}")
    for key, got in hybrid_submission_counts(results).items():
        want, pop = EXPECTED_HYBRID[key]
        bad += got != want
        print(f"{'ok ' if got == want else 'BAD'} Hybrid            {key:<43} expected {out_of(want, pop):<20} measured {out_of(got, pop)}")
    print(f"\nscanned {len(results)} RPs in {elapsed:.2f}s; {bad} mismatches")


if __name__ == "__main__":
    main()
