"""Steady-state turning radius for fixed steering poses.

Each pose is held at five speeds until the body rates settle. In the
longitudinal mode the radius barely moves at a zero body slip command,
and in the lateral mode the same happens at 90 deg, where the vehicle
drives sideways like a longitudinal vehicle turned on its side. Away
from those axes the radius trend over speed tells understeer from
oversteer.
"""

import math

from awoisv.config import characterize_grid
from awoisv.sim import steady_state_characterize

if __name__ == "__main__":
    poses, speeds, max_time = characterize_grid(None)
    table = steady_state_characterize(poses, speeds, max_time=max_time)
    print("beta_R (deg)  R0 (m)  " + "  ".join(f"{v:>6g} m/s" for v in speeds) + "  class")
    for theta, beta in table.poses():
        radii = "  ".join(f"{r:10.3f}" for r in table.radii(theta, beta))
        print(f"{math.degrees(beta):12.0f}  {1 / math.tan(abs(theta)):6.2f}  {radii}  {table.handling(theta, beta)}")
