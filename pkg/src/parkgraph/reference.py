"""Published per-street and city-wide MAE figures (lot counts) for the Santander
deployment.  Shipped as report-format fixtures: the underlying three-year
dataset is not public, so these are not reproduction targets."""

HORIZONS_MIN = (15, 30, 60, 120)

CITY_MAE = {
    "arima": (15.31, 14.95, 15.415, 15.26),
    "sarima": (11.79, 12.04, 10.97, 11.49),
    "rnn": (10.95, 11.18, 11.16, 12.13),
    "cnn": (4.166, 4.173, 5.102, 7.466),
    "gnn": (2.511, 3.301, 4.608, 7.242),
}

# cluster id -> (lots, RNN x4, CNN x4, GNN x4)
CLUSTER_MAE = {
    0: (10, 0.749, 0.734, 0.769, 0.769, 0.468, 0.497, 0.54, 0.606, 0.293, 0.392, 0.502, 0.64),
    1: (15, 0.803, 0.816, 0.822, 0.843, 0.552, 0.556, 0.579, 0.647, 0.301, 0.367, 0.472, 0.576),
    2: (5, 0.404, 0.392, 0.416, 0.429, 0.088, 0.095, 0.117, 0.155, 0.069, 0.081, 0.11, 0.139),
    3: (13, 0.911, 0.899, 0.911, 0.904, 0.669, 0.717, 0.773, 0.844, 0.243, 0.319, 0.444, 0.606),
    4: (6, 0.265, 0.291, 0.302, 0.301, 0.126, 0.148, 0.175, 0.231, 0.104, 0.123, 0.171, 0.223),
    5: (6, 1.015, 0.978, 0.968, 0.975, 0.513, 0.53, 0.587, 0.632, 0.247, 0.337, 0.448, 0.591),
    6: (14, 0.806, 0.786, 0.791, 0.803, 0.579, 0.645, 0.675, 0.806, 0.284, 0.379, 0.495, 0.673),
    7: (15, 0.913, 0.936, 0.966, 1.042, 0.51, 0.561, 0.599, 0.738, 0.241, 0.342, 0.465, 0.629),
    8: (6, 0.631, 0.703, 0.765, 0.847, 0.415, 0.539, 0.64, 0.769, 0.243, 0.368, 0.524, 0.673),
    9: (20, 1.55, 1.585, 1.611, 1.666, 0.589, 0.653, 0.715, 0.817, 0.244, 0.358, 0.521, 0.696),
    10: (12, 0.56, 0.543, 0.549, 0.54, 0.279, 0.288, 0.342, 0.449, 0.131, 0.184, 0.244, 0.327),
    11: (6, 0.422, 0.405, 0.401, 0.417, 0.24, 0.261, 0.281, 0.321, 0.088, 0.121, 0.168, 0.251),
    12: (10, 0.982, 0.974, 0.953, 0.966, 0.722, 0.733, 0.756, 0.808, 0.301, 0.4, 0.539, 0.699),
    13: (5, 0.804, 0.846, 0.874, 0.948, 0.178, 0.204, 0.256, 0.371, 0.127, 0.179, 0.265, 0.37),
    14: (18, 1.976, 2.214, 2.331, 2.372, 0.669, 0.708, 0.894, 1.115, 0.248, 0.361, 0.554, 0.806),
    15: (10, 0.744, 0.838, 1.011, 1.175, 0.245, 0.278, 0.363, 0.457, 0.131, 0.17, 0.252, 0.339),
    16: (10, 0.806, 0.886, 0.912, 1.001, 0.314, 0.331, 0.399, 0.49, 0.126, 0.187, 0.275, 0.402),
    17: (11, 0.819, 0.821, 0.839, 0.86, 0.502, 0.528, 0.594, 0.711, 0.229, 0.309, 0.399, 0.586),
    18: (16, 1.203, 1.197, 1.193, 1.167, 0.701, 0.725, 0.758, 0.821, 0.297, 0.391, 0.505, 0.658),
    19: (29, 1.276, 1.317, 1.397, 1.494, 0.94, 0.94, 1.053, 1.221, 0.759, 0.89, 1.038, 1.238),
    20: (7, 0.581, 0.623, 0.787, 0.892, 0.157, 0.182, 0.278, 0.389, 0.066, 0.108, 0.212, 0.351),
    21: (12, 0.796, 0.824, 0.834, 0.85, 0.524, 0.526, 0.593, 0.68, 0.185, 0.259, 0.367, 0.508),
    22: (10, 0.882, 0.929, 0.98, 1.108, 0.835, 0.818, 0.929, 1.088, 0.58, 0.737, 0.944, 1.211),
    23: (10, 1.51, 1.444, 1.226, 1.154, 0.395, 0.448, 0.547, 0.65, 0.191, 0.295, 0.429, 0.572),
    24: (18, 1.352, 1.165, 1.004, 1.036, 0.572, 0.653, 0.736, 0.907, 0.403, 0.546, 0.694, 0.879),
    25: (17, 3.172, 3.2, 3.145, 3.12, 0.859, 0.889, 1.107, 1.504, 0.346, 0.509, 0.816, 1.258),
    26: (12, 0.925, 0.956, 0.985, 1.057, 0.567, 0.628, 0.702, 0.833, 0.417, 0.549, 0.707, 0.929),
}
