"""Heat the centre cell of a 3x3 array and see how much of its temperature
rise reaches the neighbours.

The modified stack thickens the bottom and top electrodes, which spread and sink
heat sideways, and thins the shared electrode between heater and memristor.
More of the heat reaches the cell's own memristor and less reaches its
neighbours.  A wider pitch helps as well.  Each geometry takes about a minute.
"""

from neoheb import fdm

for variant, K in (("baseline", 120), ("modified", 120), ("baseline", 180)):
    grid = fdm.build_geometry(fdm.GeometrySpec(K=K, variant=variant))
    res = fdm.coupling_coefficients(grid)
    print(f"{variant} stack, pitch {K} nm, grid {grid.dims}, heater peak {res.heater_peak:.1f} K")
    for site, dr, dc, dist, c in res.rows(K):
        print(f"  offset ({dr:+d},{dc:+d})  {dist:6.1f} nm  coefficient {c:.3f}")
