import logging
import math
from typing import Any, Dict, List, Literal, Optional, TypedDict

import numpy as np
from langgraph.graph import END, StateGraph

from ..config import CarpetSettings, get_settings
from ..errors import CarpetError
from ..models.carpet import DerivedQuantities
from ..models.reports import DimReport
from ..models.symbolic import AntichainKind
from ..services import antichain_service, dims_service, quantizer_service
from ..utils.report_writer import markdown_table

logger = logging.getLogger(__name__)

IDENTITY_RS = (0.25, 1.0, 4.0)


class VerifyState(TypedDict):
    carpet: DerivedQuantities
    settings: CarpetSettings
    route_path: List[str]
    checks: List[Dict[str, Any]]
    next_action: str
    report: str
    passed: bool
    dims: Optional[DimReport]


class VerifyAgent:
    """Runs the invariant suite on one carpet as a routed workflow.

    Failures are recorded in ``checks`` rather than raised; ``passed`` is
    false as soon as one check fails.
    """

    def __init__(self, antichain_params=(10.0, 100.0), oracle_depth: int = 3, oracle_grid: int = 32):
        self.antichain_params = antichain_params
        self.oracle_depth = oracle_depth
        self.oracle_grid = oracle_grid
        self.graph = None

    def _record(self, state: VerifyState, name: str, passed: bool, detail: str) -> None:
        state["checks"].append({"check": name, "passed": bool(passed), "detail": detail})
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, "%s: %s (%s)", name, "ok" if passed else "FAILED", detail)

    def _guarded(self, state: VerifyState, name: str, fn) -> None:
        try:
            fn()
        except CarpetError as e:
            self._record(state, name, False, f"error: {e}")

    async def route(self, state: VerifyState) -> VerifyState:
        """Pick the branch after the antichain checks from the separation flag."""
        state["route_path"].append("route")
        state["next_action"] = "check_geometric" if state["carpet"].separated else "check_oracle"
        return state

    async def check_dims(self, state: VerifyState) -> VerifyState:
        state["route_path"].append("check_dims")
        carpet = state["carpet"]

        def identities():
            t1 = dims_service.temperature(carpet, 1.0)
            self._record(state, "T(1) = 0", abs(t1) < 1e-12, f"T(1) = {t1:.3g}")
            for r in IDENTITY_RS:
                kappa = dims_service.solve_kappa(carpet, r)
                residual = dims_service.main_equation(carpet, r, kappa)
                sr = dims_service.solve_sr(carpet, r)
                tr = dims_service.solve_tr(carpet, r)
                theta_r = dims_service.solve_theta_r(carpet, r)
                ident = dims_service.temperature(carpet, theta_r) / (1.0 - theta_r)
                self._record(state, f"kappa residual r={r:g}", abs(residual) < 1e-12, f"{residual:.3g}")
                self._record(state, f"t_r <= s_r r={r:g}", tr <= sr + 1e-12, f"s_r={sr:.12g} t_r={tr:.12g}")
                self._record(state, f"theta_r identity r={r:g}", abs(ident - tr) < 1e-9, f"gap {abs(ident - tr):.3g}")

        def conditions():
            report = dims_service.condition_report(carpet, 1.0, state["settings"].tol)
            state["dims"] = report
            detail = (
                f"s_1={report.sr:.12g} t_1={report.tr:.12g} condA={report.condition_a} "
                f"condB={report.condition_b} condC={report.condition_c}"
            )
            consistent = (not report.condition_a) or abs(report.sr - report.tr) < 1e-9
            self._record(state, "condition report r=1", consistent, detail)

        self._guarded(state, "dims identities", identities)
        self._guarded(state, "condition report", conditions)
        return state

    async def check_spectrum(self, state: VerifyState) -> VerifyState:
        state["route_path"].append("check_spectrum")
        carpet = state["carpet"]

        def convexity():
            grid = np.linspace(-2.0, 3.0, 101)
            values = np.array([dims_service.temperature(carpet, t) for t in grid])
            second = values[2:] - 2.0 * values[1:-1] + values[:-2]
            self._record(state, "T convex", bool(second.min() >= -1e-12), f"min second difference {second.min():.3g}")
            table = dims_service.spectrum(carpet, grid[::10], diff_step=state["settings"].diff_step)
            alphas = [row.alpha for row in table.rows]
            decreasing = all(b <= a + 1e-6 for a, b in zip(alphas, alphas[1:]))
            self._record(state, "alpha non-increasing", decreasing, f"alpha in [{min(alphas):.6g}, {max(alphas):.6g}]")

        self._guarded(state, "spectrum", convexity)
        return state

    async def check_antichains(self, state: VerifyState) -> VerifyState:
        state["route_path"].append("check_antichains")
        carpet, settings = state["carpet"], state["settings"]
        r = 1.0

        def sandwiches():
            for j in self.antichain_params:
                ac = antichain_service.build_antichain(carpet, AntichainKind.GAMMA_JR, j, r, settings.budget)
                mass = ac.stats.mass
                self._record(state, f"Gamma mass j={j:g}", abs(mass - 1.0) < 1e-10, f"sum mu = {mass:.15g}")
                lo, count, hi = antichain_service.cardinality_sandwich(carpet, ac)
                ok = math.nextafter(lo, 0.0) <= count <= math.nextafter(hi, math.inf)
                self._record(state, f"Gamma cardinality j={j:g}", ok, f"{lo:.6g} <= {count} <= {hi:.6g}")
                window = antichain_service.depth_window(carpet, r, j)["exact"]
                ok = window[0] - 1e-9 <= ac.stats.min_depth and ac.stats.max_depth <= window[1] + 1e-9
                self._record(
                    state, f"Gamma depth window j={j:g}", ok,
                    f"depths {ac.stats.min_depth}..{ac.stats.max_depth} in [{window[0]:.4g}, {window[1]:.4g}]",
                )
                bad = antichain_service.membership_violations(carpet, ac)
                self._record(state, f"Gamma membership j={j:g}", not bad, f"{len(bad)} violations")

        self._guarded(state, "antichains", sandwiches)
        return state

    async def check_geometric(self, state: VerifyState) -> VerifyState:
        state["route_path"].append("check_geometric")
        carpet, settings = state["carpet"], state["settings"]

        def psi():
            for j in self.antichain_params:
                ac = antichain_service.build_antichain(carpet, AntichainKind.LAMBDA_0J, j, 0.0, settings.budget)
                lo, count, hi = antichain_service.psi_sandwich(carpet, ac)
                self._record(state, f"psi sandwich j={j:g}", lo <= count <= hi, f"{lo} <= {count} <= {hi}")
                mu = np.exp(ac.log_weights)
                upper = carpet.eta0 / j
                lower = upper * carpet.pmin * carpet.qmin / carpet.qmax
                ok = bool(np.all(mu < upper * (1 + 1e-12)) and np.all(mu >= lower * (1 - 1e-12)))
                self._record(state, f"Lambda weights j={j:g}", ok, f"mu in [{mu.min():.4g}, {mu.max():.4g}]")

        self._guarded(state, "geometric", psi)
        return state

    async def check_oracle(self, state: VerifyState) -> VerifyState:
        state["route_path"].append("check_oracle")
        carpet, settings = state["carpet"], state["settings"]

        def oracle():
            cloud = quantizer_service.discretize(carpet, self.oracle_depth, settings.budget)
            slack = math.sqrt(2.0) / self.oracle_grid
            for k in (1, 2):
                if k > len(cloud):
                    continue
                fit = quantizer_service.lloyd(cloud, k, 2.0, settings.seed, settings.restarts)
                brute = quantizer_service.brute_force_error(cloud, k, 2.0, self.oracle_grid)
                ok = fit.error <= brute + slack and brute <= fit.error + slack
                self._record(state, f"oracle k={k}", ok, f"lloyd {fit.error:.10g}, grid {brute:.10g}")

        self._guarded(state, "oracle", oracle)
        return state

    async def build_report(self, state: VerifyState) -> VerifyState:
        state["route_path"].append("report")
        carpet = state["carpet"]
        passed = all(check["passed"] for check in state["checks"])
        lines = [
            "# Verification report",
            "",
            f"**Carpet:** n={carpet.n}, m={carpet.m}, N={carpet.N}, separated={carpet.separated}",
            f"**Route:** {' → '.join(state['route_path'])}",
            "",
        ]
        dims = state.get("dims")
        if dims is not None:
            lines.append("C values: " + " ".join("%.10g" % c for c in dims.c_values))
            lines.append(f"s_1 = {dims.sr:.12g}, t_1 = {dims.tr:.12g}, condA={dims.condition_a}")
            lines.append("")
        lines.append(markdown_table(state["checks"]))
        lines.append("")
        lines.append(f"**Result:** {'PASS' if passed else 'FAIL'}")
        state["report"] = "\n".join(lines)
        state["passed"] = passed
        return state

    def route_next_action(self, state: VerifyState) -> Literal["check_geometric", "check_oracle"]:
        """Router function for conditional edges."""
        return state.get("next_action", "check_oracle")

    def build_graph(self):
        workflow = StateGraph(VerifyState)

        workflow.add_node("route", self.route)
        workflow.add_node("check_dims", self.check_dims)
        workflow.add_node("check_spectrum", self.check_spectrum)
        workflow.add_node("check_antichains", self.check_antichains)
        workflow.add_node("check_geometric", self.check_geometric)
        workflow.add_node("check_oracle", self.check_oracle)
        workflow.add_node("report", self.build_report)

        workflow.set_entry_point("route")
        workflow.add_edge("route", "check_dims")
        workflow.add_edge("check_dims", "check_spectrum")
        workflow.add_edge("check_spectrum", "check_antichains")
        workflow.add_conditional_edges(
            "check_antichains",
            self.route_next_action,
            {"check_geometric": "check_geometric", "check_oracle": "check_oracle"},
        )
        workflow.add_edge("check_geometric", "check_oracle")
        workflow.add_edge("check_oracle", "report")
        workflow.add_edge("report", END)

        self.graph = workflow.compile()
        return self.graph

    async def ainvoke(self, carpet: DerivedQuantities, settings: Optional[CarpetSettings] = None) -> VerifyState:
        if not self.graph:
            self.build_graph()
        state: VerifyState = {
            "carpet": carpet,
            "settings": settings or get_settings(),
            "route_path": [],
            "checks": [],
            "next_action": "",
            "report": "",
            "passed": False,
            "dims": None,
        }
        return await self.graph.ainvoke(state)
