"""Peak spacing errors under the surface controller and the linear baseline.

    python demos/controller_comparison.py
"""

from platoon_eso.analysis import peak_table
from platoon_eso.scenario import build_scenario
from platoon_eso.simulation import run


def main() -> None:
    scenario = build_scenario("default")
    dsc = run(scenario, record_stride=10)
    baseline = run(scenario, "baseline", record_stride=10)
    print(peak_table(dsc, baseline))


if __name__ == "__main__":
    main()
