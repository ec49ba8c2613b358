"""Print the per-stage operation counts for a few sampling-rate and event-rate settings."""

from nrfar.ops import CostParams, cost, format_table, relative_difference


def main() -> None:
    base = cost()
    print(format_table(base, "md"))
    for f_i, events in ((4000, 2.0), (2000, 4.0), (8000, 2.0)):
        other = cost(CostParams(f_i=f_i, jm_events_per_s=events))
        delta = relative_difference(other.ops_per_s, base.ops_per_s)
        print(f"f_i={f_i} Hz, {events:g} JM/s: {other.ops_per_s:,} ops/s ({delta:+.1f}% vs default)")


if __name__ == "__main__":
    main()
