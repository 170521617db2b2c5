"""The daily simulation loop, run records and ensemble execution."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import market as mk
from .accounting import FlowModel, TotalCollapse, flow_amounts, liquidation_order
from .config import SimConfig
from .stochastic import derive_stream, dividend_update, ou_coefficients, ou_log_update
from .strategies import ConfigError

LOOKBACK_10Y = 2520
INVESTOR_LAGS = (21, 252, 2520)
PHASES = ("processes", "signals", "demand", "clearing", "accrual", "flows", "solvency", "record")


class InfeasibleEpisode(RuntimeError):
    """An externally controlled agent broke its constraints."""


@dataclass
class AdaptiveSpec:
    """An extra fund whose bounded signal is chosen externally.

    kind:
      ``schedule`` - phi~(t) = schedule[t-1] on day t (held at the last entry past the end)
      ``constant`` - phi~(t) = params["c"]
      ``vi``       - value rule with params {"k", "beta"}
      ``tf``       - trend rule with params {"horizon", "beta"}
    ``replaces`` puts the fund in the slot of an existing base fund (inheriting its
    holdings and leverage); otherwise it is appended with ``wealth_share`` of the
    initial total wealth (taken pro rata from the base population).
    """

    kind: str = "schedule"
    schedule: np.ndarray | None = None
    params: dict = field(default_factory=dict)
    wealth_share: float = 0.0
    replaces: int | None = None


@dataclass
class RunRecord:
    days: int
    price: np.ndarray
    fundamental_value: np.ndarray
    dividend: np.ndarray
    volume: np.ndarray
    wealth_shares: np.ndarray  # (days, 4): nt, vi, tf, adaptive
    admin_position: np.ndarray
    clearing_iters: np.ndarray
    residual: np.ndarray
    short_interest: np.ndarray
    style_wealth: np.ndarray  # (days+1, 4) aggregate wealth by style, row 0 = initial
    cash_ledger: dict  # per-day aggregate cash components
    share_error: np.ndarray
    initial_price: float
    panel: dict | None = None
    adaptive_wealth: np.ndarray | None = None
    investor_value: np.ndarray | None = None
    failure: str | None = None
    failure_day: int | None = None
    events: list | None = None

    @property
    def completed(self) -> bool:
        return self.failure is None


class Simulation:
    """One market instance. ``step_day`` advances a single trading day."""

    def __init__(self, config: SimConfig, adaptive: AdaptiveSpec | None = None, record_panel: bool = False,
                 log_events: bool = False, horizon: int | None = None, investor=None):
        self.cfg = config
        self.adaptive = adaptive
        self.investor = investor
        self.record_panel = record_panel
        self.events = [] if log_events else None
        self.T = config.run.t_max_days if horizon is None else horizon
        self._initialize()

    # ---- setup ---------------------------------------------------------------------

    def _initialize(self):
        cfg = self.cfg
        pop = cfg.population
        seed = cfg.run.master_seed
        counts = (pop.n_nt, pop.n_vi, pop.n_tf)
        style = np.concatenate([np.full(n, s, np.int64) for s, n in zip((0, 1, 2), counts)])
        n_base = style.shape[0]
        het = derive_stream(seed, "heterogeneity")
        k = np.full(n_base, np.nan)
        value_idx = np.flatnonzero(style <= 1)
        k[value_idx] = het.uniform(*pop.discount_rate_range, size=value_idx.shape[0])
        hor = np.zeros(n_base, np.int64)
        tf_idx = np.flatnonzero(style == 2)
        hor[tf_idx] = het.integers(*pop.horizon_range, size=tf_idx.shape[0])
        agg = cfg.market.aggression
        beta = np.array([(agg.nt, agg.vi, agg.tf)[s] for s in style], float)

        share = np.zeros(n_base)
        for s, n in zip((0, 1, 2), counts):
            if n:
                share[style == s] = pop.initial_shares[s] / n

        ad = self.adaptive
        self.adaptive_slot = None
        self.ad_kind = None
        if ad is not None:
            if ad.kind not in ("schedule", "constant", "vi", "tf"):
                raise ValueError(f"unknown adaptive kind {ad.kind}")
            self.ad_kind = ad.kind
            self.ad_schedule = None
            if ad.schedule is not None:
                sched = np.asarray(ad.schedule, float)
                if not np.all(np.isfinite(sched)):
                    raise ValueError("adaptive schedule must be finite")
                self.ad_schedule = np.clip(sched, -1.0, 1.0)
            self.ad_params = dict(ad.params)
            if ad.replaces is not None:
                self.adaptive_slot = int(ad.replaces)
            else:
                if not 0.0 <= ad.wealth_share < 1.0:
                    raise ValueError("adaptive wealth share must lie in [0, 1)")
                if ad.wealth_share > 0:
                    share = share * (1.0 - ad.wealth_share)
                style = np.append(style, 3)
                k = np.append(k, np.nan)
                hor = np.append(hor, 0)
                beta = np.append(beta, 1.0)
                share = np.append(share, ad.wealth_share)
                self.adaptive_slot = n_base
        n = style.shape[0]
        self.n = n
        self.style = style
        self.k = k
        self.hor = hor
        self.beta = beta
        self.lam = np.full(n, cfg.market.leverage)
        self.ids = np.arange(n, dtype=np.int64)
        self.next_id = n
        self.active = np.ones(n, bool)
        self.loans = np.zeros(n)
        self.base_style_of_slot = style.copy()
        if self.adaptive_slot is not None:
            self.style[self.adaptive_slot] = 3
            if self.ad_kind == "vi":
                self.k[self.adaptive_slot] = self.ad_params["k"]
            if self.ad_kind in ("vi", "tf"):
                self.beta[self.adaptive_slot] = self.ad_params["beta"]
            if self.ad_kind == "tf":
                self.hor[self.adaptive_slot] = int(self.ad_params["horizon"])

        dv = cfg.processes.dividend
        self.g = cfg.daily_growth
        self.G = math.expm1(252 * self.g)
        if np.any(self.k[~np.isnan(self.k)] <= self.G):
            raise ConfigError("discount rates must exceed dividend growth")
        self.delta = dv.delta0
        self.u = 0.0
        self.div_stream = derive_stream(seed, "dividend")
        ou = cfg.processes.ou
        self.ou_a, self.ou_scale = ou_coefficients(ou.theta, ou.sigma)
        self.ln_mu = math.log(ou.mu)
        self.y = np.zeros(n)
        self.ou_streams = {}
        for i in np.flatnonzero(style == 0):
            self.ou_streams[i] = derive_stream(seed, f"ou:{self.ids[i]}")

        Q = cfg.market.supply_q
        self.Q = Q
        V = self._valuations()
        wv = share[~np.isnan(V)]
        vv = V[~np.isnan(V)]
        vbar = float(np.sum(wv * vv) / np.sum(wv)) if np.sum(wv) > 0 else (float(np.mean(vv)) if vv.size else 1.0)
        W = share * pop.initial_wealth_ratio * Q * vbar
        # shares pro rata to wealth; an appended adaptive fund starts all in cash
        # (a fund taking over a base slot starts exactly like the fund it replaces)
        holders = W.copy()
        if self.adaptive_slot is not None and ad.replaces is None:
            holders[self.adaptive_slot] = 0.0
        S = holders / np.sum(holders) * Q
        # initial price: day-0 market with wealth held fixed at W; trend followers passive
        init_style = np.where(style == 3, self.base_style_of_slot, style)
        mode = np.where((init_style == 2) | (init_style == 3), mk.HOLD, mk.VALUE).astype(np.int64)
        val = np.where(np.isnan(V), 1.0, V)
        fixed = np.zeros(n)
        hold_s = np.where(mode == mk.HOLD, S, 0.0)
        cash0 = np.where(mode == mk.HOLD, 0.0, W)
        if np.any(mode != mk.HOLD) and np.any(W[mode != mk.HOLD] > 0):
            p0, _, _ = mk.solve_clearing(vbar, Q, Q, (mode, val, fixed, self.beta, self.lam, cash0, hold_s, self.loans),
                                         tol=cfg.market.clearing_tol, max_iter=cfg.market.max_iter, day=0)
        else:
            p0 = vbar
        self.p0 = p0
        self.cash = W - p0 * S
        self.shares = S
        self.admin = 0.0
        self.t = 0
        T = self.T
        self.P = np.empty(T + 1)
        self.P[0] = p0
        self._alloc_records(T)
        self.w_prev = self.cash + p0 * self.shares
        self.flow_model = FlowModel(cfg.flows.intercept_annual, cfg.flows.coef_10y, cfg.flows.period_days)
        self.nav = np.ones((n, LOOKBACK_10Y + 1)) if (cfg.flows.enabled or self.investor is not None) else None
        if self.investor is not None:
            # fund units start at NAV 1; the investor starts all in cash
            self.units = self.w_prev.copy()
            self.inv_units = np.zeros(n)
            self.inv_cash = float(self.investor.capital)
            self.inv_value = np.empty(T + 1)
            self.inv_value[0] = self.inv_cash
        self.style_w[0] = self._style_wealth(p0)

    def _alloc_records(self, T):
        self.rec_fv = np.empty(T)
        self.rec_div = np.empty(T)
        self.rec_vol = np.empty(T)
        self.rec_ws = np.empty((T, 4))
        self.rec_admin = np.empty(T)
        self.rec_iters = np.empty(T, np.int64)
        self.rec_resid = np.empty(T)
        self.rec_short = np.empty(T)
        self.rec_share_err = np.empty(T)
        self.style_w = np.empty((T + 1, 4))
        self.ledger = {k: np.zeros(T) for k in ("cash_before", "cash_after", "interest", "dividends", "admin_proceeds", "flows", "written_off")}
        self.ad_w = np.empty(T + 1) if self.adaptive_slot is not None else None
        if self.ad_w is not None:
            self.ad_w[0] = 0.0
        if self.record_panel:
            n = self.n
            self.pan = {k: np.empty((T, n)) for k in ("wealth", "cash", "shares", "signal", "flow")}
            self.pan["fund_id"] = np.empty((T, n), np.int64)
            self.pan["style"] = np.empty((T, n), np.int64)
            self.pan["active"] = np.empty((T, n), bool)

    # ---- helpers -------------------------------------------------------------------

    def _valuations(self):
        G = self.G
        return 252.0 * self.delta * (1.0 + G) / (self.k - G)

    def _adaptive_fixed(self, t):
        if self.ad_kind == "constant":
            return float(np.clip(self.ad_params["c"], -1.0, 1.0))
        sch = self.ad_schedule
        if sch is None or sch.shape[0] == 0:
            return 0.0
        return float(sch[min(t - 1, sch.shape[0] - 1)])

    def _style_wealth(self, p):
        W = self.cash + p * self.shares - self.loans
        out = np.zeros(4)
        pos = self.active & (W > 0)
        for s in range(4):
            m = pos & (self.style == s)
            if np.any(m):
                out[s] = np.sum(W[m])
        if self.ad_w is not None and self.t <= self.T:
            self.ad_w[self.t] = float(np.sum(W[self.style == 3] * self.active[self.style == 3]))
        return out

    def _log(self, phase):
        if self.events is not None:
            self.events.append((self.t, phase))

    # ---- the daily loop ------------------------------------------------------------

    def step_day(self):
        if self.t >= self.T:
            raise RuntimeError("simulation horizon reached")
        cfg = self.cfg
        t = self.t + 1
        self.t = t
        i0 = t - 1
        style = self.style
        active = self.active

        # 1. exogenous processes
        self._log("processes")
        dv = cfg.processes.dividend
        self.delta, self.u = dividend_update(self.delta, self.u, self.g, dv.sigma_daily, dv.rho, self.div_stream.normal())
        for i, st in self.ou_streams.items():
            if active[i]:
                self.y[i] = ou_log_update(self.y[i], self.ln_mu, self.ou_a, self.ou_scale, st.normal())

        # 2. signals
        self._log("signals")
        V = self._valuations()
        val = np.where(np.isnan(V), 1.0, V)
        nt = style == 0
        val[nt] = V[nt] * np.exp(self.y[nt])
        mode = np.full(self.n, mk.VALUE, np.int64)
        fixed = np.zeros(self.n)
        P = self.P
        tf = np.flatnonzero(style == 2)
        for i in tf:
            h = self.hor[i]
            if t >= h:
                mode[i] = mk.FIXED
                fixed[i] = math.tanh(self.beta[i] * math.log2(P[t - 1] / P[t - h]))
            else:
                mode[i] = mk.HOLD
        for i in np.flatnonzero(style == 3):
            if self.ad_kind == "vi":
                continue
            mode[i] = mk.FIXED
            if self.ad_kind == "tf":
                h = self.hor[i]
                fixed[i] = math.tanh(self.beta[i] * math.log2(P[t - 1] / P[t - h])) if t >= h else 0.0
            else:
                fixed[i] = self._adaptive_fixed(t)

        # 3. demand curves
        self._log("demand")
        mode[~active] = mk.OFF
        arrays = (mode, val, fixed, self.beta, self.lam, self.cash, self.shares, self.loans)

        # 4. clearing, execution, administrator sale
        self._log("clearing")
        cash_before = float(np.sum(self.cash[active]))
        sell = liquidation_order(self.admin, cfg.solvency.liquidation_rate)
        self.admin -= sell
        qnet = self.Q - self.admin
        p, iters, resid = mk.solve_clearing(P[t - 1], qnet, self.Q, arrays, tol=cfg.market.clearing_tol,
                                           max_iter=cfg.market.max_iter, day=t)
        realized = np.empty(self.n)
        gross = mk.execute_kernel(p, mode, val, fixed, self.beta, self.lam, self.cash, self.shares, self.loans, realized)
        P[t] = p
        proceeds = p * sell

        # 5. dividends and interest on post-trade positions
        self._log("accrual")
        r_d = cfg.market.interest_annual / 252.0
        c_pre = self.cash[active]
        interest = float(np.sum(c_pre * r_d))
        dividends = float(np.sum(self.delta * self.shares[active]))
        self.cash[active] = c_pre * (1.0 + r_d) + self.delta * self.shares[active]

        # 6. investor flows
        self._log("flows")
        W = self.cash + p * self.shares - self.loans
        flows = np.zeros(self.n)
        if self.nav is not None:
            pos = active & (self.w_prev > 0)
            ratio = np.ones(self.n)
            ratio[pos] = W[pos] / self.w_prev[pos]
            slot = t % (LOOKBACK_10Y + 1)
            self.nav[:, slot] = self.nav[:, (t - 1) % (LOOKBACK_10Y + 1)] * np.where(pos, ratio, 1.0)
            if cfg.flows.enabled and t % cfg.flows.period_days == 0:
                flows = self._flows(t, W, active)
                self._issue_units(flows, W)
                self.cash += flows
                W = W + flows
            if self.investor is not None:
                self.inv_cash *= 1.0 + r_d
                if t % cfg.flows.period_days == 0:
                    a = self._investor_orders(t, W, active)
                    du = self._unit_delta(a, W)
                    self.units += du
                    self.inv_units += du
                    self.inv_cash -= float(np.sum(a))
                    self.cash += a
                    W = W + a
                    flows = flows + a
        total_flows = float(np.sum(flows[active]))
        self.w_prev = W.copy()

        # 7. solvency and splits
        self._log("solvency")
        written = 0.0
        bad = np.flatnonzero(active & (W < 0))
        for i in bad:
            if self.investor is not None:
                self.units[i] = 0.0
                self.inv_units[i] = 0.0
            self.admin += self.shares[i]
            written += self.cash[i]
            self.shares[i] = 0.0
            self.cash[i] = 0.0
            self.loans[i] = 0.0
            active[i] = False
        if bad.size:
            self._split(bad, p)
        cash_after = float(np.sum(self.cash[active]))

        # 8. records
        self._log("record")
        W = self.cash + p * self.shares - self.loans
        sw = self._style_wealth(p)
        self.style_w[t] = sw
        tot = float(np.sum(sw))
        self.rec_ws[i0] = sw / tot if tot > 0 else np.nan
        vi_pos = active & (style == 1) & (W > 0)
        if np.any(vi_pos):
            self.rec_fv[i0] = float(np.sum(W[vi_pos] * V[vi_pos]) / np.sum(W[vi_pos]))
        else:
            vi = style == 1
            self.rec_fv[i0] = float(np.mean(V[vi])) if np.any(vi) else np.nan
        self.rec_div[i0] = self.delta
        self.rec_vol[i0] = 0.5 * (gross + abs(sell))
        self.rec_admin[i0] = self.admin
        self.rec_iters[i0] = iters
        self.rec_resid[i0] = abs(resid) / self.Q
        neg = self.shares < 0
        self.rec_short[i0] = float(-np.sum(self.shares[neg])) / self.Q if np.any(neg) else 0.0
        self.rec_share_err[i0] = float(np.sum(self.shares[active]) + self.admin - self.Q)
        if self.investor is not None:
            self.inv_value[t] = self._investor_value(W)
        lg = self.ledger
        lg["cash_before"][i0] = cash_before
        lg["cash_after"][i0] = cash_after
        lg["interest"][i0] = interest
        lg["dividends"][i0] = dividends
        lg["admin_proceeds"][i0] = proceeds
        lg["flows"][i0] = total_flows
        lg["written_off"][i0] = written
        if self.record_panel:
            pan = self.pan
            pan["wealth"][i0] = W
            pan["cash"][i0] = self.cash
            pan["shares"][i0] = self.shares
            pan["signal"][i0] = realized
            pan["flow"][i0] = flows
            pan["fund_id"][i0] = self.ids
            pan["style"][i0] = style
            pan["active"][i0] = active
        return p

    def _flows(self, t, W, active):
        L = LOOKBACK_10Y + 1
        now = self.nav[:, t % L]
        if t >= LOOKBACK_10Y:
            perf = now / self.nav[:, (t - LOOKBACK_10Y) % L] - 1.0
        else:
            perf = now ** (252.0 / t) - 1.0
        pos = active & (W > 0)
        out = np.zeros(self.n)
        if not np.any(pos):
            return out
        bench = float(np.sum(W[pos] * perf[pos]) / np.sum(W[pos]))
        er_pct = (perf - bench) * 100.0
        out[pos] = flow_amounts(W[pos], er_pct[pos], self.flow_model)
        return out

    # ---- external investor ---------------------------------------------------------

    def _unit_delta(self, amounts, W):
        du = np.zeros(self.n)
        m = (amounts != 0) & (W > 0) & (self.units > 0)
        du[m] = amounts[m] * self.units[m] / W[m]
        return du

    def _issue_units(self, amounts, W):
        if self.investor is not None:
            self.units += self._unit_delta(amounts, W)

    def _investor_value(self, W):
        m = self.active & (W > 0) & (self.units > 0)
        return self.inv_cash + float(np.sum(self.inv_units[m] * W[m] / self.units[m]))

    def investor_features(self, t, W, active):
        """Per-fund features: unit returns at 21/252/2520-day lags, TNA, style, holdings."""
        L = LOOKBACK_10Y + 1
        now = self.nav[:, t % L]
        feats = {}
        for lag in INVESTOR_LAGS:
            feats[f"ret_{lag}"] = now / self.nav[:, (t - lag) % L] - 1.0 if t >= lag else np.full(self.n, np.nan)
        live = active & (W > 0) & (self.units > 0)
        hold = np.zeros(self.n)
        hold[live] = self.inv_units[live] * W[live] / self.units[live]
        feats.update(tna=np.where(live, W, 0.0), style=self.style.copy(), fund_id=self.ids.copy(), active=live,
                     holdings=hold, cash=self.inv_cash, day=t)
        return feats

    def _investor_orders(self, t, W, active):
        inv = self.investor
        feats = self.investor_features(t, W, active)
        a = np.asarray(inv.allocate(feats), float).copy()
        if a.shape != (self.n,) or not np.all(np.isfinite(a)):
            raise InfeasibleEpisode(f"day {t}: allocation must be {self.n} finite amounts")
        if float(np.sum(np.abs(a))) > inv.budget * (1.0 + 1e-12):
            raise InfeasibleEpisode(f"day {t}: allocations {np.sum(np.abs(a)):.6g} exceed budget {inv.budget:.6g}")
        live = feats["active"]
        a[~live] = 0.0
        # redemptions are capped at holdings, then purchases at available cash
        a = np.maximum(a, -feats["holdings"])
        cash = self.inv_cash - float(np.sum(a[a < 0]))
        buy = a > 0
        want = float(np.sum(a[buy]))
        if want > cash:
            a[buy] *= max(cash, 0.0) / want
        return a

    def _split(self, vacant, p):
        """Halve the wealthiest fund (ties to the lowest id) into each vacant slot."""
        factor = self.cfg.solvency.split_factor
        queue = list(vacant)
        while queue:
            W = self.cash + p * self.shares - self.loans
            cand = np.flatnonzero(self.active & (W > 0))
            if cand.size == 0:
                raise TotalCollapse(f"no solvent fund remains on day {self.t}")
            top = W[cand].max()
            b = int(min(cand[W[cand] == top], key=lambda i: self.ids[i]))
            pieces = min(factor, len(queue) + 1)
            slots = [b] + [queue.pop(0) for _ in range(pieces - 1)]
            c, s, l_ = self.cash[b] / pieces, self.shares[b] / pieces, self.loans[b] / pieces
            if self.investor is not None:
                u, iu = self.units[b] / pieces, self.inv_units[b] / pieces
                self.units[slots] = u
                self.inv_units[slots] = iu
            wp = self.w_prev[b] / pieces
            for j in slots:
                self.style[j] = self.style[b]
                self.k[j] = self.k[b]
                self.hor[j] = self.hor[b]
                self.beta[j] = self.beta[b]
                self.lam[j] = self.lam[b]
                self.y[j] = self.y[b]
                self.cash[j] = c
                self.shares[j] = s
                self.loans[j] = l_
                self.w_prev[j] = wp
                self.active[j] = True
                if self.nav is not None:
                    self.nav[j] = self.nav[b]
                self.ids[j] = self.next_id
                self.next_id += 1
                self.ou_streams.pop(j, None)
                if self.style[j] == 0:
                    self.ou_streams[j] = derive_stream(self.cfg.run.master_seed, f"ou:{self.ids[j]}")

    def run(self) -> RunRecord:
        failure = None
        day = None
        try:
            while self.t < self.T:
                self.step_day()
        except (mk.NoBracket, TotalCollapse, InfeasibleEpisode) as e:
            failure = f"{type(e).__name__}: {e}"
            day = self.t
        return self.record(failure, day)

    def record(self, failure=None, failure_day=None) -> RunRecord:
        d = self.t if failure is None else self.t - 1
        d = max(d, 0)
        panel = None
        if self.record_panel:
            panel = {k: v[:d] for k, v in self.pan.items()}
        return RunRecord(
            days=d,
            price=self.P[1:d + 1].copy(),
            fundamental_value=self.rec_fv[:d].copy(),
            dividend=self.rec_div[:d].copy(),
            volume=self.rec_vol[:d].copy(),
            wealth_shares=self.rec_ws[:d].copy(),
            admin_position=self.rec_admin[:d].copy(),
            clearing_iters=self.rec_iters[:d].copy(),
            residual=self.rec_resid[:d].copy(),
            short_interest=self.rec_short[:d].copy(),
            style_wealth=self.style_w[:d + 1].copy(),
            cash_ledger={k: v[:d].copy() for k, v in self.ledger.items()},
            share_error=self.rec_share_err[:d].copy(),
            initial_price=self.p0,
            panel=panel,
            adaptive_wealth=None if self.ad_w is None else self.ad_w[:d + 1].copy(),
            investor_value=None if self.investor is None else self.inv_value[:d + 1].copy(),
            failure=failure,
            failure_day=failure_day,
            events=self.events,
        )


def initialize(config: SimConfig, **kw) -> Simulation:
    return Simulation(config, **kw)


def run(config: SimConfig, **kw) -> RunRecord:
    return Simulation(config, **kw).run()


def _run_one(args):
    config, kw = args
    try:
        return run(config, **kw)
    except Exception as e:  # configuration problems inside one member stay isolated
        return e


def default_workers() -> int:
    env = os.environ.get("EVOLOGY_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def run_ensemble(configs, workers: int | None = None, **kw) -> list:
    """Run configs in order; failures come back as exceptions or failed RunRecords, never raised."""
    configs = list(configs)
    if not configs:
        return []
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(c, kw) for c in configs]
    if workers == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs, chunksize=1))
