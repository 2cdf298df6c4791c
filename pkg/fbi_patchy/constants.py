# ## path: fbi_patchy/constants.py

# Document versions
SCHEMA_VERSION = 1
DOC_KIND_SEED = 'seed'
DOC_KIND_SOLUTION = 'patchy-solution'

# System definition kinds
KIND_CENTER_SYSTEM = 'center-system'
KIND_PLANT = 'plant-normal-form'
DEFINITION_KINDS = (KIND_CENTER_SYSTEM, KIND_PLANT)

# Expression language
FUNCTIONS = ('sin', 'cos', 'exp', 'sqrt')
CONSTANTS = {'pi': 3.141592653589793}

# Exit codes
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_SOLVER = 4
EXIT_DOMAIN = 5

# Numerical limits
MAX_EIGEN_DIM = 32
MAX_SEED_DEGREE = 30
ORIGIN_TOL = 1e-9
SEED_RESIDUAL_TOL = 1e-10
COEFF_RESIDUAL_TOL = 1e-6
LINEAR_PERIODIC_RESIDUAL = 1e-8
CARE_RESIDUAL_TOL = 1e-8
HURWITZ_MARGIN = 1e-6

# Closed-loop summaries
TRANSIENT_FRACTION = 1.0 / 3.0
SETTLING_BAND = 1e-2
DEFAULT_HORIZON = 30.0
DEFAULT_SIM_SAMPLES = 3001

# CSV columns
COL_W1 = 'w1'
COL_W2 = 'w2'
COL_TIME = 't'
COL_CONTROL = 'u'
COL_OUTPUT = 'y'
COL_REFERENCE = 'y_ref'
COL_ERROR = 'e'
COL_METHOD = 'method'
COL_DEGREE = 'degree'
COL_SUP_ERROR = 'sup_error'
CSV_FLOAT_FORMAT = '%.17g'

# Definition file keys
DEF_NAME = 'name'
DEF_KIND = 'kind'
DEF_PARAMS = 'params'
DEF_LET = 'let'
DEF_VARIABLES = 'variables'
DEF_EXOSYSTEM = 'exosystem'
DEF_B = 'B'
DEF_ZBAR = 'zbar'
DEF_REFERENCE = 'reference'
DEF_F0 = 'f0'
DEF_A = 'a'
DEF_B_DRIFT = 'b'
DEF_P = 'p'
DEF_COORDINATES = 'coordinates'
DEF_DOMAIN = 'domain'
DEF_SOLVE = 'solve'
DEF_LQR = 'lqr'
DEF_SIMULATE = 'simulate'
