"""Do features learned under one policy still serve the next one?

Policy iteration on the reward chain produces a path of policies and values.
For each policy we build eigen, resolvent and random feature sets and measure
how well every other policy's value function fits inside each span. Resolvent
features transfer best on average. The four-rooms feature-evolution run then
shows a single feature column morphing across the grid.
"""

import numpy as np

import repdyn as rd

bundle = rd.run_chain_transfer()
J = int(bundle.tables["policy_iteration"].rows[0, 0])
print(f"policy iteration path length J = {J}")
means = dict(zip(bundle.tables["mean_offdiagonal_angles"].columns,
                 bundle.tables["mean_offdiagonal_angles"].rows[0]))
print("mean off-diagonal angle by feature family:")
for name, value in sorted(means.items(), key=lambda kv: kv[1]):
    print(f"  {name:5s} {value:.3f}")

row = bundle.tables["angles_rsbf"].rows[J // 2]
print(f"\nresolvent-feature row j={J // 2} across the path:", np.round(row, 3))
bundle.save("out/demos/chain_transfer")

# Four-rooms: heads trained jointly with the features; snapshots of feature 0
# and its projections onto the transition eigenfunctions land in the bundle.
rooms = rd.run_four_rooms_features({"t_max": 40.0,
                                    "snapshot_times": (0.0, 20.0, 40.0)})
rooms.save("out/demos/four_rooms")
print("\nbundles saved to out/demos/chain_transfer and out/demos/four_rooms;",
      "all checks pass" if bundle.all_passed() and rooms.all_passed()
      else "SOME CHECKS FAILED")
