"""Two-sided Student-t critical values, df = 1..100, six decimals."""

T_CRITICAL: dict[float, tuple[float, ...]] = {
    0.9: (
        6.313752, 2.919986, 2.353363, 2.131847, 2.015048, 1.943180, 1.894579, 1.859548,
        1.833113, 1.812461, 1.795885, 1.782288, 1.770933, 1.761310, 1.753050, 1.745884,
        1.739607, 1.734064, 1.729133, 1.724718, 1.720743, 1.717144, 1.713872, 1.710882,
        1.708141, 1.705618, 1.703288, 1.701131, 1.699127, 1.697261, 1.695519, 1.693889,
        1.692360, 1.690924, 1.689572, 1.688298, 1.687094, 1.685954, 1.684875, 1.683851,
        1.682878, 1.681952, 1.681071, 1.680230, 1.679427, 1.678660, 1.677927, 1.677224,
        1.676551, 1.675905, 1.675285, 1.674689, 1.674116, 1.673565, 1.673034, 1.672522,
        1.672029, 1.671553, 1.671093, 1.670649, 1.670219, 1.669804, 1.669402, 1.669013,
        1.668636, 1.668271, 1.667916, 1.667572, 1.667239, 1.666914, 1.666600, 1.666294,
        1.665996, 1.665707, 1.665425, 1.665151, 1.664885, 1.664625, 1.664371, 1.664125,
        1.663884, 1.663649, 1.663420, 1.663197, 1.662978, 1.662765, 1.662557, 1.662354,
        1.662155, 1.661961, 1.661771, 1.661585, 1.661404, 1.661226, 1.661052, 1.660881,
        1.660715, 1.660551, 1.660391, 1.660234,
    ),
    0.95: (
        12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912, 2.364624, 2.306004,
        2.262157, 2.228139, 2.200985, 2.178813, 2.160369, 2.144787, 2.131450, 2.119905,
        2.109816, 2.100922, 2.093024, 2.085963, 2.079614, 2.073873, 2.068658, 2.063899,
        2.059539, 2.055529, 2.051831, 2.048407, 2.045230, 2.042272, 2.039513, 2.036933,
        2.034515, 2.032245, 2.030108, 2.028094, 2.026192, 2.024394, 2.022691, 2.021075,
        2.019541, 2.018082, 2.016692, 2.015368, 2.014103, 2.012896, 2.011741, 2.010635,
        2.009575, 2.008559, 2.007584, 2.006647, 2.005746, 2.004879, 2.004045, 2.003241,
        2.002465, 2.001717, 2.000995, 2.000298, 1.999624, 1.998972, 1.998341, 1.997730,
        1.997138, 1.996564, 1.996008, 1.995469, 1.994945, 1.994437, 1.993943, 1.993464,
        1.992997, 1.992543, 1.992102, 1.991673, 1.991254, 1.990847, 1.990450, 1.990063,
        1.989686, 1.989319, 1.988960, 1.988610, 1.988268, 1.987934, 1.987608, 1.987290,
        1.986979, 1.986675, 1.986377, 1.986086, 1.985802, 1.985523, 1.985251, 1.984984,
        1.984723, 1.984467, 1.984217, 1.983972,
    ),
    0.99: (
        63.656741, 9.924843, 5.840909, 4.604095, 4.032143, 3.707428, 3.499483, 3.355387,
        3.249836, 3.169273, 3.105807, 3.054540, 3.012276, 2.976843, 2.946713, 2.920782,
        2.898231, 2.878440, 2.860935, 2.845340, 2.831360, 2.818756, 2.807336, 2.796940,
        2.787436, 2.778715, 2.770683, 2.763262, 2.756386, 2.749996, 2.744042, 2.738481,
        2.733277, 2.728394, 2.723806, 2.719485, 2.715409, 2.711558, 2.707913, 2.704459,
        2.701181, 2.698066, 2.695102, 2.692278, 2.689585, 2.687013, 2.684556, 2.682204,
        2.679952, 2.677793, 2.675722, 2.673734, 2.671823, 2.669985, 2.668216, 2.666512,
        2.664870, 2.663287, 2.661759, 2.660283, 2.658857, 2.657479, 2.656145, 2.654854,
        2.653604, 2.652394, 2.651220, 2.650081, 2.648977, 2.647905, 2.646863, 2.645852,
        2.644869, 2.643913, 2.642983, 2.642078, 2.641198, 2.640340, 2.639505, 2.638691,
        2.637897, 2.637123, 2.636369, 2.635632, 2.634914, 2.634212, 2.633527, 2.632858,
        2.632204, 2.631565, 2.630940, 2.630330, 2.629732, 2.629148, 2.628576, 2.628016,
        2.627468, 2.626931, 2.626405, 2.625891,
    ),
}
