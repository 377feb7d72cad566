"""Check the design conditions, synthesise gains that meet them, and simulate.

The study gains violate some conditions; ``suggest_gains`` fixes gains in
dependency order for the single-follower ``verified`` scenario and the run
confirms the observer and Lyapunov bounds.

    python demos/verified_design.py
"""

from platoon_eso.analysis import build_report, run_bounds
from platoon_eso.scenario import build_scenario
from platoon_eso.simulation import run
from platoon_eso.synthesis import suggest_gains, verify_all


def main() -> None:
    study = build_scenario("default")
    failed = sorted({c.name for c in verify_all(study.gains, study.design_problem()).failures()})
    print(f"study gains violate: {', '.join(failed)}")

    scenario = build_scenario("verified")
    problem = scenario.design_problem()
    gains = suggest_gains(problem, delta=scenario.gains.delta, epsilon=scenario.gains.epsilon)
    print(f"suggested gains pass every condition: {verify_all(gains, problem).passed}")

    trace = run(scenario)
    print(build_report(trace, run_bounds(scenario)).to_text())


if __name__ == "__main__":
    main()
