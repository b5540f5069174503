"""Analysis helpers on their own: excitation, Hurwitz tests, Lyapunov bounds."""
import numpy as np

from adapt_sync import hot_mu_bound, hurwitz_check, lorenz_gain_and_G, lyapunov_solve, min_phase_check, pe_metric

t = np.linspace(0.0, 20.0, 20001)
print("PE level of sin t over 2 pi:", pe_metric(np.sin(t), 2 * np.pi, t=t).alpha_hat)
print("PE level of (sin t, 2 sin t):", pe_metric(np.column_stack([np.sin(t), 2 * np.sin(t)]), 5.0, t=t).alpha_hat)

k, G = lorenz_gain_and_G(10.0, 8.0 / 3.0)
for y in (-30.0, 0.0, 30.0):
    ok, abscissa = hurwitz_check(G(y))
    print(f"G({y:+.0f}) Hurwitz={ok} abscissa={abscissa:.3f}; symmetric part diag =",
          np.diag(G(y) + G(y).T))

print("(p+2)/(p+1)^2 minimum phase:", min_phase_check(([1.0, 2.0], [1.0, 2.0, 1.0])))
print("(p-1)/(p+1)^2 minimum phase:", min_phase_check(([1.0, -1.0], [1.0, 2.0, 1.0])))

F = np.array([[0.0, 1.0], [-2.0, -3.0]])
P = lyapunov_solve(F)
print("P =", P.round(4).tolist(), "residual", np.abs(F.T @ P + P @ F + 2 * np.eye(2)).max())
print("tuner gain bound, scalar case:", hot_mu_bound([[-1.0]], [1.0], [1.0], 1.0))
