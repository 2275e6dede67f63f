"""Independent oracle computations whose outputs are frozen into the tests.

Nothing here imports the package: the invariant sample uses a plain numpy
Euler-Maruyama loop, and the Lyapunov radius is found with scipy's brentq.
Run with ``python3 tools/compute_oracles.py`` (about a minute).
"""

import numpy as np
from scipy import integrate, optimize

# ---------------------------------------------------------------- quasi-optimal theta for ou-sin
# dX = (-X - 0.5 sin X) dt + dW, model b_m = -theta x:
# theta_0 = E[x (x + 0.5 sin x)] / E[x^2] under the invariant law.
CHAINS, DT, STRIDE, BURN, PER_CHAIN = 1000, 0.002, 50, 20.0, 10_000
rng = np.random.Generator(np.random.PCG64(20240607))
x = np.zeros(CHAINS)
for _ in range(int(BURN / DT)):
    x += (-x - 0.5 * np.sin(x)) * DT + np.sqrt(DT) * rng.standard_normal(CHAINS)
num = np.zeros(CHAINS)
den = np.zeros(CHAINS)
for _ in range(PER_CHAIN):
    for _ in range(STRIDE):
        x += (-x - 0.5 * np.sin(x)) * DT + np.sqrt(DT) * rng.standard_normal(CHAINS)
    num += x * (x + 0.5 * np.sin(x))
    den += x * x
ratio = num.sum() / den.sum()
# delta-method standard error from the independent chains
resid = (num - ratio * den) / den.mean()
se = resid.std(ddof=1) / np.sqrt(CHAINS)
print(f"theta0 (1e7 invariant points): {ratio!r}  se={se!r}")

w = lambda t: np.exp(-t * t + np.cos(t))  # invariant density up to a constant
a = integrate.quad(lambda t: t * np.sin(t) * w(t), -np.inf, np.inf, epsabs=1e-14)[0]
b = integrate.quad(lambda t: t * t * w(t), -np.inf, np.inf, epsabs=1e-14)[0]
print(f"theta0 (quadrature of exact density): {1 + 0.5 * a / b!r}")

# ---------------------------------------------------------------- Lyapunov constants
def lyap(gamma, nu, kappa0, vk, d):
    g = lambda r: nu * (-r ** (1 + gamma) / vk + vk) / np.sqrt(1 + r * r) + nu / 2 * (
        nu * kappa0 + kappa0 * (1 + d) / np.sqrt(1 + r * r))
    target = -nu * nu * kappa0 / 4 if gamma > 0 else (nu * nu * kappa0 / 2 - nu / vk) / 2
    R1 = optimize.brentq(lambda r: g(r) - target, 0.0, 1e6, xtol=1e-15, rtol=1e-15)
    E1 = -g(R1)
    E2 = np.exp(nu * np.sqrt(1 + R1 * R1)) * (nu * vk + nu * kappa0 / 2 * (nu + 1 + d))
    return R1, E1, E2


print("lyapunov(1,1,1,1,1): R1, E1, E2 =", lyap(1, 1, 1, 1, 1))
print("lyapunov(0,0.5,1,1,1): R1, E1, E2 =", lyap(0, 0.5, 1, 1, 1))
