"""Compiled per-step kernels.

Two kernels advance the simulation over a batch of steps on flat arrays:

* ``run_steps``       -- full engine, including start-up lost time ramps.
* ``run_steps_basic`` -- reference build with the lost-time code absent.

With ``lost_time == 0`` the full kernel takes the exact same arithmetic path
as the basic one, so their trajectories must agree bit-for-bit; a test pins
that equivalence.  Stochastic arrival counts are drawn outside the kernel
(rows of ``arrivals``), so both kernels are deterministic given their inputs.

Metric rows per step: [queue, exited_inc, delay_inc, speed_num, speed_den,
origin_wait_inc, probe_outflow].
"""

from collections import namedtuple

import numpy as np
from numba import njit

GREEN, YELLOW, ALL_RED = 0, 1, 2
N_METRICS = 7
(M_QUEUE, M_EXITED, M_DELAY, M_SPEED_NUM, M_SPEED_DEN, M_WAIT,
 M_PROBE) = range(N_METRICS)

_EPS = 1e-12

NetArrays = namedtuple("NetArrays", [
    "cell_lanes", "cell_vf", "cell_w", "cell_kj", "cell_q", "cell_dx",
    "cell_down", "cell_kc", "cell_queue_sig",
    "mov_up", "mov_down", "mov_beta", "mov_sat", "mov_sig", "mov_phase_mask",
    "sig_phase_start", "sig_phase_ptr", "phase_movs",
    "sig_nphases", "sig_yellow", "sig_all_red",
    "origin_first_cell", "sink_last_cell", "sink_cap",
])

StateArrays = namedtuple("StateArrays", [
    "density", "origin_queue", "clock",
    "sig_current", "sig_interim", "sig_timer", "sig_green_elapsed",
    "sig_pending", "mov_last_green", "totals",
    "cell_delay_acc", "origin_wait_acc",
])

ScratchArrays = namedtuple("ScratchArrays", [
    "S", "R", "rrem", "inflow", "outflow", "mov_d", "dem_sum", "out_sum",
])


def make_scratch(n_cells: int, n_movements: int) -> ScratchArrays:
    z = lambda n: np.zeros(n, dtype=np.float64)
    return ScratchArrays(z(n_cells), z(n_cells), z(n_cells), z(n_cells),
                         z(n_cells), z(n_movements), z(n_cells), z(n_cells))


@njit(cache=True)
def _update_signals(net, st, requests_row, t, dt):
    n_sig = net.sig_nphases.shape[0]
    for s in range(n_sig):
        req = requests_row[s]
        if st.sig_interim[s] == GREEN:
            if req >= 0 and req != st.sig_current[s]:
                st.sig_interim[s] = YELLOW
                st.sig_timer[s] = net.sig_yellow[s]
                st.sig_pending[s] = req
            else:
                st.sig_green_elapsed[s] += dt
        else:
            st.sig_timer[s] -= dt
        # Advance through zero-or-expired interim stages; a node may fall
        # straight through to green when yellow and all-red are both zero.
        while st.sig_interim[s] != GREEN and st.sig_timer[s] <= _EPS:
            if st.sig_interim[s] == YELLOW:
                st.sig_interim[s] = ALL_RED
                st.sig_timer[s] = net.sig_all_red[s]
            else:
                st.sig_interim[s] = GREEN
                st.sig_current[s] = st.sig_pending[s]
                st.sig_pending[s] = -1
                # The completion step is itself a green second, so elapsed
                # always equals green seconds served in the current phase.
                st.sig_green_elapsed[s] = dt
                st.sig_timer[s] = 0.0
                row = net.sig_phase_start[s] + st.sig_current[s]
                for i in range(net.sig_phase_ptr[row], net.sig_phase_ptr[row + 1]):
                    st.mov_last_green[net.phase_movs[i]] = t


@njit(cache=True)
def _movement_green(net, st, m):
    s = net.mov_sig[m]
    if s < 0:
        return True
    if st.sig_interim[s] != GREEN:
        return False
    return (net.mov_phase_mask[m] >> st.sig_current[s]) & 1 == 1


@njit(cache=True)
def _flow_body(net, st, sc, dt, probe_cell, out_row, arrivals_row, t,
               lost_time):
    n_cells = net.cell_lanes.shape[0]
    n_mov = net.mov_up.shape[0]

    for c in range(n_cells):
        k = st.density[c]
        sc.S[c] = min(net.cell_vf[c] * k, net.cell_q[c]) * net.cell_lanes[c]
        r = min(net.cell_q[c], net.cell_w[c] * (net.cell_kj[c] - k))
        sc.R[c] = r * net.cell_lanes[c]
        sc.rrem[c] = sc.R[c] * dt
        sc.inflow[c] = 0.0
        sc.outflow[c] = 0.0
        sc.dem_sum[c] = 0.0
        sc.out_sum[c] = 0.0

    # Demand injection: arrivals buffer in a virtual origin queue, then move
    # into the first cell up to its remaining receiving budget.
    n_origins = net.origin_first_cell.shape[0]
    for o in range(n_origins):
        a = arrivals_row[o]
        st.origin_queue[o] += a
        # Kahan-compensated total keeps the conservation ledger tight over
        # hundreds of thousands of steps.
        y = a - st.totals[2]
        tot = st.totals[0] + y
        st.totals[2] = (tot - st.totals[0]) - y
        st.totals[0] = tot
        c = net.origin_first_cell[o]
        x = st.origin_queue[o]
        if x > sc.rrem[c]:
            x = sc.rrem[c]
        st.origin_queue[o] -= x
        sc.inflow[c] += x
        sc.rrem[c] -= x

    # Intersection movement demands (signal mask and saturation applied).
    for m in range(n_mov):
        if not _movement_green(net, st, m):
            sc.mov_d[m] = 0.0
            continue
        base = net.mov_beta[m] * sc.S[net.mov_up[m]]
        if lost_time > 0.0:
            a = (t - st.mov_last_green[m]) / lost_time
            if a < 0.0:
                a = 0.0
            elif a > 1.0:
                a = 1.0
            base = base * a
        d = base
        if d > net.mov_sat[m]:
            d = net.mov_sat[m]
        d *= dt
        sc.mov_d[m] = d
        sc.dem_sum[net.mov_down[m]] += d

    # Merge resolution: competing inflows into one cell scale by a common
    # factor, preserving their ratios.
    for m in range(n_mov):
        d = sc.mov_d[m]
        if d <= 0.0:
            continue
        c = net.mov_down[m]
        if sc.dem_sum[c] > sc.rrem[c]:
            d *= sc.rrem[c] / sc.dem_sum[c]
            sc.mov_d[m] = d
        sc.out_sum[net.mov_up[m]] += d

    # Diverge resolution: movements sharing an upstream cell may not drain
    # more than it can send.
    for m in range(n_mov):
        d = sc.mov_d[m]
        if d <= 0.0:
            continue
        c = net.mov_up[m]
        cap = sc.S[c] * dt
        if sc.out_sum[c] > cap:
            d *= cap / sc.out_sum[c]
        sc.inflow[net.mov_down[m]] += d
        sc.outflow[c] += d

    # Intra-link transfers.
    for c in range(n_cells):
        dn = net.cell_down[c]
        if dn >= 0:
            q = sc.S[c]
            if sc.R[dn] < q:
                q = sc.R[dn]
            q *= dt
            sc.inflow[dn] += q
            sc.outflow[c] += q

    # Sink drainage out of the network.
    n_sinks = net.sink_last_cell.shape[0]
    exited = 0.0
    for i in range(n_sinks):
        c = net.sink_last_cell[i]
        q = sc.S[c]
        if net.sink_cap[i] < q:
            q = net.sink_cap[i]
        q *= dt
        sc.outflow[c] += q
        exited += q
    y = exited - st.totals[3]
    tot = st.totals[1] + y
    st.totals[3] = (tot - st.totals[1]) - y
    st.totals[1] = tot
    out_row[M_EXITED] = exited

    # Delay and speed from this step's realized flows, then conservation
    # update of densities.
    delay = 0.0
    snum = 0.0
    sden = 0.0
    for c in range(n_cells):
        area = net.cell_dx[c] * net.cell_lanes[c]
        k = st.density[c]
        if k > 1e-15:
            qr = sc.outflow[c] / dt
            v = qr / (k * net.cell_lanes[c])
            if v > net.cell_vf[c]:
                v = net.cell_vf[c]
            dly = k * area * (1.0 - v / net.cell_vf[c]) * dt
            delay += dly
            st.cell_delay_acc[c] += dly
            snum += qr * v
            sden += qr
        st.density[c] = k + (sc.inflow[c] - sc.outflow[c]) / area

    wait = 0.0
    for o in range(n_origins):
        oq = st.origin_queue[o] * dt
        wait += oq
        st.origin_wait_acc[o] += oq
    out_row[M_DELAY] = delay + wait
    out_row[M_WAIT] = wait
    out_row[M_SPEED_NUM] = snum
    out_row[M_SPEED_DEN] = sden
    out_row[M_PROBE] = sc.outflow[probe_cell] if probe_cell >= 0 else 0.0

    queue = 0.0
    for c in range(n_cells):
        if net.cell_queue_sig[c] >= 0 and st.density[c] >= net.cell_kc[c] - _EPS:
            queue += st.density[c] * net.cell_dx[c] * net.cell_lanes[c]
    out_row[M_QUEUE] = queue


@njit(cache=True)
def run_steps(net, st, sc, requests, arrivals, dt, lost_time, probe_cell,
              out_metrics):
    n_steps = requests.shape[0]
    for i in range(n_steps):
        t = st.clock[0]
        _update_signals(net, st, requests[i], t, dt)
        _flow_body(net, st, sc, dt, probe_cell, out_metrics[i], arrivals[i],
                   t, lost_time)
        st.clock[0] = t + dt


@njit(cache=True)
def _flow_body_basic(net, st, sc, dt, probe_cell, out_row, arrivals_row):
    """As :func:`_flow_body` with the capacity-ramp code absent entirely.

    Every arithmetic expression is written identically so that the two
    kernels agree bit-for-bit when lost time is disabled.
    """
    n_cells = net.cell_lanes.shape[0]
    n_mov = net.mov_up.shape[0]

    for c in range(n_cells):
        k = st.density[c]
        sc.S[c] = min(net.cell_vf[c] * k, net.cell_q[c]) * net.cell_lanes[c]
        r = min(net.cell_q[c], net.cell_w[c] * (net.cell_kj[c] - k))
        sc.R[c] = r * net.cell_lanes[c]
        sc.rrem[c] = sc.R[c] * dt
        sc.inflow[c] = 0.0
        sc.outflow[c] = 0.0
        sc.dem_sum[c] = 0.0
        sc.out_sum[c] = 0.0

    n_origins = net.origin_first_cell.shape[0]
    for o in range(n_origins):
        a = arrivals_row[o]
        st.origin_queue[o] += a
        # Kahan-compensated total keeps the conservation ledger tight over
        # hundreds of thousands of steps.
        y = a - st.totals[2]
        tot = st.totals[0] + y
        st.totals[2] = (tot - st.totals[0]) - y
        st.totals[0] = tot
        c = net.origin_first_cell[o]
        x = st.origin_queue[o]
        if x > sc.rrem[c]:
            x = sc.rrem[c]
        st.origin_queue[o] -= x
        sc.inflow[c] += x
        sc.rrem[c] -= x

    for m in range(n_mov):
        if not _movement_green(net, st, m):
            sc.mov_d[m] = 0.0
            continue
        base = net.mov_beta[m] * sc.S[net.mov_up[m]]
        d = base
        if d > net.mov_sat[m]:
            d = net.mov_sat[m]
        d *= dt
        sc.mov_d[m] = d
        sc.dem_sum[net.mov_down[m]] += d

    for m in range(n_mov):
        d = sc.mov_d[m]
        if d <= 0.0:
            continue
        c = net.mov_down[m]
        if sc.dem_sum[c] > sc.rrem[c]:
            d *= sc.rrem[c] / sc.dem_sum[c]
            sc.mov_d[m] = d
        sc.out_sum[net.mov_up[m]] += d

    for m in range(n_mov):
        d = sc.mov_d[m]
        if d <= 0.0:
            continue
        c = net.mov_up[m]
        cap = sc.S[c] * dt
        if sc.out_sum[c] > cap:
            d *= cap / sc.out_sum[c]
        sc.inflow[net.mov_down[m]] += d
        sc.outflow[c] += d

    for c in range(n_cells):
        dn = net.cell_down[c]
        if dn >= 0:
            q = sc.S[c]
            if sc.R[dn] < q:
                q = sc.R[dn]
            q *= dt
            sc.inflow[dn] += q
            sc.outflow[c] += q

    n_sinks = net.sink_last_cell.shape[0]
    exited = 0.0
    for i in range(n_sinks):
        c = net.sink_last_cell[i]
        q = sc.S[c]
        if net.sink_cap[i] < q:
            q = net.sink_cap[i]
        q *= dt
        sc.outflow[c] += q
        exited += q
    y = exited - st.totals[3]
    tot = st.totals[1] + y
    st.totals[3] = (tot - st.totals[1]) - y
    st.totals[1] = tot
    out_row[M_EXITED] = exited

    delay = 0.0
    snum = 0.0
    sden = 0.0
    for c in range(n_cells):
        area = net.cell_dx[c] * net.cell_lanes[c]
        k = st.density[c]
        if k > 1e-15:
            qr = sc.outflow[c] / dt
            v = qr / (k * net.cell_lanes[c])
            if v > net.cell_vf[c]:
                v = net.cell_vf[c]
            dly = k * area * (1.0 - v / net.cell_vf[c]) * dt
            delay += dly
            st.cell_delay_acc[c] += dly
            snum += qr * v
            sden += qr
        st.density[c] = k + (sc.inflow[c] - sc.outflow[c]) / area

    wait = 0.0
    for o in range(n_origins):
        oq = st.origin_queue[o] * dt
        wait += oq
        st.origin_wait_acc[o] += oq
    out_row[M_DELAY] = delay + wait
    out_row[M_WAIT] = wait
    out_row[M_SPEED_NUM] = snum
    out_row[M_SPEED_DEN] = sden
    out_row[M_PROBE] = sc.outflow[probe_cell] if probe_cell >= 0 else 0.0

    queue = 0.0
    for c in range(n_cells):
        if net.cell_queue_sig[c] >= 0 and st.density[c] >= net.cell_kc[c] - _EPS:
            queue += st.density[c] * net.cell_dx[c] * net.cell_lanes[c]
    out_row[M_QUEUE] = queue


@njit(cache=True)
def run_steps_basic(net, st, sc, requests, arrivals, dt, probe_cell,
                    out_metrics):
    """Reference kernel: deterministic dynamics, no mesoscopic code."""
    n_steps = requests.shape[0]
    for i in range(n_steps):
        t = st.clock[0]
        _update_signals(net, st, requests[i], t, dt)
        _flow_body_basic(net, st, sc, dt, probe_cell, out_metrics[i],
                         arrivals[i])
        st.clock[0] = t + dt
