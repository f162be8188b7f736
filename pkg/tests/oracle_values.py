"""Reference numbers computed once by 50-digit decimal bisection, independent of fixscan."""

PHI0 = 0.38545849852962405           # root of 2x^3 + x = 1/2
PHI_HALF = 0.2863661121629142        # root of 2x^3 + x = 1/3
PHI_02 = 0.35498103446648366
PHI_03 = 0.33593954039737184
PHI_04 = 0.31342263791312175
ROOT_ONE = 0.5897545123014584        # root of 2x^3 + x = 1
ROOT_ONE_SQ = 0.34781038477993104
U_HALF_ONE = (0.32159152804072855, 0.02050138754882569)  # planar fixed point at alpha=0.5, beta=1

G_AT_01 = 0.030960430217200307       # (0.1 + 1)^3 (PHI0 - 0.1)^3
C1 = 0.00022862368541380886
C2 = 1.4288980338363054e-05
F_SINGLETON_AT_01 = 0.010014156575316506  # f(0.1, 0) for F = {0}
EXCESS_SINGLETON_AT_01 = 1.415657531650677e-05
