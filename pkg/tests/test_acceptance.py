"""Acceptance criteria, each run at its stated tolerance.

Every test appends one ``PASS``/``FAIL`` line to ``RESULTS``; ``conftest.py``
prints them after the run. Criteria 1 and 6 are long (tens of minutes each on
one core).
"""

import math
from dataclasses import replace

import numpy as np
import pytest

import oracles
from paramnoise import cli, mvn, noise
from paramnoise.noise import EpisodeRecord, NoiseDistribution
from paramnoise.rl import CriticNet, PolicyNet, TrainConfig, run_training
from paramnoise.toybench import ToyConfig, reward_dense, reward_gradient, reward_sparse, run_sweep, run_toy

RESULTS = []


def report(number, name, ok, detail):
    RESULTS.append(f"criterion {number} {'PASS' if ok else 'FAIL'}: {name}: {detail}")
    assert ok, detail


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# --- 1: toy table --------------------------------------------------------------

# published mean steps-to-optimize per (reward, strategy, sigma^2)
PUBLISHED_STEPS = {
    ("dense", "fv", 1.0): 4.39e3,
    ("dense", "ac", 1.0): 2.35e3,
    ("dense", "pro", 1.0): 1.70e3,
    ("dense", "fv", 0.5): 2.10e4,
    ("dense", "ac", 0.5): 2.45e3,
    ("dense", "pro", 0.5): 2.20e3,
    ("sparse", "fv", 1.0): 4.61e3,
    ("sparse", "ac", 1.0): 1.14e3,
    ("sparse", "pro", 1.0): 1.25e3,
    ("sparse", "fv", 0.5): 2.81e4,
    ("sparse", "ac", 0.5): 1.17e3,
    ("sparse", "pro", 0.5): 4.25e3,
}


@pytest.fixture(scope="module")
def toy_table():
    table = {}
    for reward, strategy, s2 in PUBLISHED_STEPS:
        cfg = ToyConfig(strategy=strategy, sparse=reward == "sparse", sigma_fix_sq=s2)
        table[reward, strategy, s2] = run_sweep(cfg, 100)[0]
    return table


def test_criterion_1_toy_table(toy_table):
    problems = []
    for (reward, strategy, s2), st in toy_table.items():
        cell = f"{reward} {strategy}:{s2}"
        if strategy == "pro" and st.optimized != 100:
            problems.append(f"{cell} optimized {st.optimized}")
        if strategy == "fv" and st.optimized < 96:
            problems.append(f"{cell} optimized {st.optimized}")
        if strategy == "ac" and reward == "sparse" and st.optimized > 80:
            problems.append(f"{cell} optimized {st.optimized}")
        ratio = st.steps_mean / PUBLISHED_STEPS[reward, strategy, s2]
        if not (math.isfinite(ratio) and abs(math.log10(ratio)) <= 1.0):
            problems.append(f"{cell} steps {st.steps_mean:.3g} vs {PUBLISHED_STEPS[reward, strategy, s2]:.3g}")
    for reward in ("dense", "sparse"):
        for s2 in (1.0, 0.5):
            pro, fv = toy_table[reward, "pro", s2].steps_mean, toy_table[reward, "fv", s2].steps_mean
            if not pro < fv:
                problems.append(f"{reward} {s2}: pro steps {pro:.3g} not below fv {fv:.3g}")
    summary = ", ".join(
        f"{r[0]}/{s}:{v} opt {st.optimized} steps {st.steps_mean:.3g}" for (r, s, v), st in toy_table.items()
    )
    report(1, "toy table", not problems, "; ".join(problems) or summary)


# --- 2: variance collapse -------------------------------------------------------


def test_criterion_2_variance_collapse():
    seeds = range(100)
    base = ToyConfig(sparse=True, max_steps=100)
    collapsed = 0
    for seed in seeds:
        r = run_toy(replace(base, strategy="ac", seed=seed))
        if any(log.sigma_bar < 0.01 for log in r.logs):
            collapsed += 1
    pro_ok = 0
    min_ratio = math.inf
    for seed in seeds:
        r = run_toy(replace(base, strategy="pro", seed=seed, max_steps=400))
        first = r.first_reward_window if r.first_reward_window is not None else len(r.logs)
        ratio = min((log.sigma_bar for log in r.logs[:first]), default=math.inf) / math.sqrt(base.sigma_fix_sq)
        min_ratio = min(min_ratio, ratio)
        pro_ok += ratio >= 0.5
    ok = collapsed >= 90 and pro_ok == 100
    report(
        2,
        "variance collapse",
        ok,
        f"AC below 0.01 within 100 windows in {collapsed}/100 seeds (need 90); "
        f"Pro kept sigma_bar >= 0.5 sigma_fix before its first reward in {pro_ok}/100 (min ratio {min_ratio:.3g})",
    )


# --- 3: unit oracles ------------------------------------------------------------


def test_criterion_3_unit_oracles():
    rng = np.random.default_rng(2024)
    worst = {"weights": 0.0, "alpha": 0.0, "covariance": 0.0, "distance": 0.0, "sigma": 0.0}
    for _ in range(1000):
        k = int(rng.integers(1, 12))
        scale = 10.0 ** rng.uniform(-3, 3)
        returns = list(rng.normal(size=k) * scale + rng.normal() * scale)
        h, h2 = rng.uniform(0.1, 20), rng.uniform(0.1, 20)
        w = noise.compute_weights(returns, h)
        worst["weights"] = max(worst["weights"], max(rel(a, b) for a, b in zip(w, oracles.weights(returns, h))))
        a_ref = oracles.alpha(returns, h2)
        a = noise.compute_alpha(returns, h2)
        worst["alpha"] = max(worst["alpha"], abs(a - a_ref) / max(abs(a_ref), 1e-300) if a_ref > 1e-300 else abs(a - a_ref))

        n = int(rng.integers(1, 7))
        eps = rng.normal(size=(k, n))
        cov = noise.update_covariance([EpisodeRecord(e, j) for e, j in zip(eps, returns)], w)
        ref = np.array(oracles.covariance(eps.tolist(), list(w)))
        worst["covariance"] = max(worst["covariance"], float(np.max(np.abs(cov - ref)) / max(np.max(np.abs(ref)), 1e-300)))

        states = rng.normal(size=(int(rng.integers(1, 9)), 3))
        m1, m2 = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        d = noise.policy_distance(lambda s: s @ m1, lambda s: s @ m2, states)
        d_ref = oracles.distance((states @ m1).tolist(), (states @ m2).tolist())
        worst["distance"] = max(worst["distance"], rel(d, d_ref))

        sigma, dd, delta = rng.uniform(0.01, 2), rng.uniform(0, 1), rng.uniform(0, 1)
        worst["sigma"] = max(worst["sigma"], rel(noise.adapt_sigma(sigma, dd, delta), oracles.sigma_step(sigma, dd, delta, 1.01)))

    degenerate = [
        np.array_equal(noise.compute_weights([2.5] * 4, 8.0), [0.25] * 4),
        noise.compute_alpha([0.0, 0.0, 0.0], 10.0) == 1.0,
        noise.compute_alpha([-3.0, 0.0, -1.0], 10.0) == 1.0,
        noise.compute_alpha([-5.0, -5.0], 10.0) == 1.0,
        noise.compute_alpha([-4.0, -1.0], 2.0) == pytest.approx(math.exp(-2.0)),
        noise.compute_alpha([-4.0, -1.0], 2.0) == oracles.alpha([-4.0, -1.0], 2.0),
    ]
    ok = max(worst.values()) <= 1e-10 and all(degenerate)
    errors = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    report(3, "unit oracles", ok, f"worst relative errors {errors} (limit 1e-10); degenerate branches ok: {all(degenerate)}")


# --- 4: sampler statistics ------------------------------------------------------


def test_criterion_4_sampler_statistics():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(20):
        n = 2 + i % 7
        a = rng.normal(size=(n, n))
        big_sigma = a @ a.T / n
        sigma = rng.uniform(0.2, 1.5)
        for alpha in (0.0, 0.3, 1.0):
            dist = NoiseDistribution(sigma=sigma, big_sigma=big_sigma, alpha=alpha)
            draws = noise.sample_noise(dist, mvn.make_rng(100 * i + int(alpha * 10)), 100_000)
            target = noise.effective_covariance(dist)
            emp = draws.T @ draws / len(draws)
            worst = max(worst, np.linalg.norm(emp - target) / np.linalg.norm(target))
    report(4, "sampler statistics", worst < 0.05, f"worst relative Frobenius error {worst:.4f} (limit 0.05)")


# --- 5: gradient checks ---------------------------------------------------------


def _fd(f, array, step=1e-5):
    params = array.reshape(-1)
    g = np.zeros_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + step
        hi = f()
        params[i] = old - step
        lo = f()
        params[i] = old
        g[i] = (hi - lo) / (2 * step)
    return g.reshape(array.shape)


def test_criterion_5_gradient_checks():
    c = (3.0, 3.0)
    rng = np.random.default_rng(5)
    toy_err = 0.0
    pts = rng.uniform(-1, 7, size=(20000, 2))
    sparse_pts = pts[((pts - 3.0) ** 2).sum(axis=1) < 6.0][:500]
    for sparse, group in ((False, pts[:500]), (True, sparse_pts)):
        f = (lambda t: reward_sparse(t, c)) if sparse else (lambda t: reward_dense(t, c))
        for p in group:
            fd = np.array(oracles.central_diff(f, list(p), 1e-5))
            toy_err = max(toy_err, float(np.max(np.abs(reward_gradient(p, c, sparse) - fd))))

    net_err = 0.0
    for seed in range(3):
        r = np.random.default_rng(seed)
        actor = PolicyNet((4, 6, 5, 2), (1.0, 2.5), True)
        actor.params[...] = r.normal(size=actor.params.size) * 0.8
        x = r.normal(size=(3, 4))
        w = r.normal(size=(3, 2))
        u, cache = actor.forward(x)
        grad = actor.backward(cache, w)
        fd = _fd(lambda: float(np.sum(actor.forward(x)[0] * w)), actor.params)
        net_err = max(net_err, float(np.max(np.abs(grad - fd)) / np.max(np.abs(fd))))

        critic = CriticNet((4, 6, 5), 2, True)
        critic.params[...] = r.normal(size=critic.params.size) * 0.8
        ua = r.normal(size=(3, 2))
        wq = r.normal(size=3)
        q, cache = critic.forward(x, ua)
        grad, du = critic.backward(cache, wq)
        fd = _fd(lambda: float(np.sum(critic.forward(x, ua)[0] * wq)), critic.params)
        net_err = max(net_err, float(np.max(np.abs(grad - fd)) / np.max(np.abs(fd))))
        fd_u = _fd(lambda: float(np.sum(critic.forward(x, ua)[0] * wq)), ua)
        net_err = max(net_err, float(np.max(np.abs(du - fd_u)) / np.max(np.abs(fd_u))))
    ok = toy_err <= 1e-6 and net_err <= 1e-4
    report(5, "gradient checks", ok, f"toy max abs error {toy_err:.2e} (limit 1e-6); nets max rel error {net_err:.2e} (limit 1e-4)")


# --- 6 and 7: sparse cartpole, proposed vs baseline -----------------------------

# desk-scale budget: 20 runs on one core within about an hour
RL_SEEDS = range(10)
RL_CONFIG = dict(env="sparse-cartpole-swingup", hidden=(32, 32), epochs=20, episodes_per_epoch=10)


@pytest.fixture(scope="module")
def cartpole_runs():
    return {
        strategy: [run_training(TrainConfig(strategy=strategy, seed=seed, **RL_CONFIG)) for seed in RL_SEEDS]
        for strategy in ("pro", "plappert")
    }


def test_criterion_6_sparse_advantage(cartpole_runs):
    finals = {s: [r.curve[-1].mean_return_perturbed for r in runs] for s, runs in cartpole_runs.items()}
    # a seed counts when its final policy earns reward, the same epoch the median is taken over
    nonzero = {s: sum(r.curve[-1].mean_return_perturbed != 0 for r in runs) for s, runs in cartpole_runs.items()}
    ever = {s: sum(any(j != 0 for j in r.episode_returns) for r in runs) for s, runs in cartpole_runs.items()}
    med = {s: float(np.median(v)) for s, v in finals.items()}
    ok = med["pro"] > med["plappert"] and nonzero["pro"] > nonzero["plappert"]
    report(
        6,
        "sparse advantage",
        ok,
        f"median final return pro {med['pro']:.4g} vs plappert {med['plappert']:.4g}; "
        f"seeds with nonzero final return pro {nonzero['pro']} vs plappert {nonzero['plappert']} "
        f"(any nonzero episode: pro {ever['pro']}, plappert {ever['plappert']})",
    )


def test_criterion_7_alpha_pattern(cartpole_runs):
    before_ok = True
    directional = 0
    for r in cartpole_runs["pro"]:
        k = r.state.config.K
        first = next((i for i, j in enumerate(r.episode_returns) if j != 0), len(r.episode_returns))
        before = [log for log in r.logs if (log.update_index + 1) * k <= first]
        after = [log for log in r.logs if (log.update_index + 1) * k > first]
        before_ok &= all(log.alpha == 1.0 for log in before)
        directional += any(log.alpha < 0.5 for log in after)
    ok = before_ok and directional >= 1
    report(
        7,
        "isotropic then directional",
        ok,
        f"alpha == 1 before the first nonzero return in every seed: {before_ok}; "
        f"seeds with a window alpha < 0.5 afterwards: {directional}/{len(cartpole_runs['pro'])}",
    )


# --- 8: determinism -------------------------------------------------------------


def test_criterion_8_determinism(tmp_path):
    runs = [
        ["toy", "--strategy", "fv,ac,pro", "--reward", "dense,sparse", "--seeds", "5", "--max-steps", "2000"],
        [
            "baseline-compare", "--seeds", "3", "--epochs", "3", "--episodes-per-epoch", "4", "--K", "2",
            "--hidden", "8,8", "--warmup-steps", "200", "--batch", "16", "--distance-batch", "16",
        ],
    ]
    mismatched, compared = [], 0
    for i, args in enumerate(runs):
        dirs = [tmp_path / f"{i}{tag}" for tag in "ab"]
        for d in dirs:
            assert cli.main(args + ["--out", str(d)]) == 0
        for f in sorted(dirs[0].glob("*.csv")):
            compared += 1
            if f.read_bytes() != (dirs[1] / f.name).read_bytes():
                mismatched.append(f.name)
    report(8, "determinism", not mismatched, f"{compared} CSVs compared, mismatches: {mismatched or 'none'}")
