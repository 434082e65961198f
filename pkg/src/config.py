"""
Configuraciones globales para el motor de inferencia conjunta pose/atributos.
Todos los parámetros ajustables del sistema están centralizados aquí.
"""

# ============================================================================
# CONFIGURACIÓN DEL MODELO
# ============================================================================
# Partes humanas del modelo por defecto (índice = posición en la lista)
PART_NAMES = ("torso", "RU.arm", "LU.arm", "RL.arm", "LL.arm", "head")
TREE_EDGES = ((0, 5), (0, 1), (0, 2), (1, 3), (2, 4))    # (padre, hijo)
SYMMETRIC_PAIRS = ((1, 2), (3, 4))
SYMMETRIC_PAIR_NAMES = ("U.arms", "L.arms")              # Nombres de columnas agrupadas
ROOT_PART = 0

# Atributos de prenda y su dependencia con las partes
ATTRIBUTE_NAMES = ("Collar", "Color", "Neckline", "Pattern", "Sleeve")
ATTRIBUTE_CARDINALITIES = (4, 8, 4, 5, 3)
ATTRIBUTE_DEPENDENCY = ((0, 5), (0,), (0, 5), (0,), (1, 2, 3, 4))
ATTRIBUTE_FEATURE_KIND = ("shape", "color", "shape", "texture", "color")
ATTRIBUTE_TREE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4))  # Cadena Collar-...-Sleeve

# Dimensiones de descriptores por defecto
UNARY_DIM = 16                      # Descriptor unario (HOG precalculado)
HIST_DIM = 16                       # Histogramas RGB y LAB
CONSISTENCY_DIM = 2                 # Un chi-cuadrado por espacio de color
DEFORMATION_DIM = 9 + 20 + 1        # Posición relativa + rotación + distancia
POSITION_BINS = 9
ROTATION_BINS = 20
BOX_WIDTH_RATIO = 1.0 / 3.0         # Ancho de caja = s * ratio

# ============================================================================
# CONFIGURACIÓN DE DATOS
# ============================================================================
MAX_CANDIDATES = 40                 # Tope K_i por parte
HIST_SUM_TOL = 1e-6                 # Tolerancia de normalización de histogramas
DATASET_FORMAT = "joint-struct-dataset"
DATASET_VERSION = 1

# ============================================================================
# CONFIGURACIÓN DE CARACTERÍSTICAS
# ============================================================================
CHI2_EPS = 1e-10                    # Evita divisiones por cero en bins vacíos

# ============================================================================
# CONFIGURACIÓN DE INFERENCIA
# ============================================================================
ALPHA = 0.1                         # Peso de la energía de bordes fuertes
BETA = 1.0                          # Peso del término de distancia dentro de Q
MAX_ITER = 10                       # Iteraciones máximas del ascenso por coordenadas
CONVERGENCE_TOL = 1e-12             # "S* no cambia"
BRUTE_FORCE_CAP = 10 ** 7           # Tamaño máximo del espacio para el oráculo exhaustivo

# ============================================================================
# CONFIGURACIÓN DE ENTRENAMIENTO (SSVM)
# ============================================================================
SSVM_C = 0.01                       # Compromiso margen / precisión
EPOCHS = 100                        # Épocas de subgradiente por ronda
LEARNING_RATE = 1.0                 # eta_0
LEARNING_DECAY = 1.0                # eta_t = eta_0 / (1 + decay * t)
NEGATIVES_PER_INSTANCE = 16         # R
HARD_NEGATIVE_ROUNDS = 10           # Tope de rondas de negativos difíciles; se corta antes si ninguno nuevo viola el margen
NEGATIVE_SAMPLING_ATTEMPTS = 20     # Reintentos antes de perturbar un positivo

# ============================================================================
# CONFIGURACIÓN DE EVALUACIÓN
# ============================================================================
PCP_THRESHOLD = 0.5
CV_FOLDS = 3
ALPHA_GRID = (0.0, 0.1, 1.0)
BETA_GRID = (-1.0, 0.0, 1.0)

# ============================================================================
# CONFIGURACIÓN DE DATOS SINTÉTICOS
# ============================================================================
SYNTH_TRAIN_COUNT = 300
SYNTH_TEST_COUNT = 700
SYNTH_CANDIDATES = 8                # K por parte
SYNTH_IMAGE_SIZE = (320, 320)       # (ancho, alto)
SYNTH_EDGE_PIXELS = 12              # Píxeles de borde por candidato con evidencia

# ============================================================================
# CONFIGURACIÓN DE VISUALIZACIÓN
# ============================================================================
# Colores en formato BGR (Blue, Green, Red) para OpenCV
CANDIDATE_COLOR = (90, 90, 90)      # Gris para candidatos no elegidos
SKELETON_COLOR = (0, 255, 0)        # Verde para la pose predicha
TRUTH_COLOR = (0, 0, 255)           # Rojo para la verdad de terreno
TEXT_COLOR = (255, 255, 255)        # Blanco para texto
LINE_THICKNESS = 2
TEXT_SCALE = 0.45
TEXT_THICKNESS = 1
SHOW_CANDIDATES = True              # Dibujar todos los candidatos de fondo
SHOW_ATTRIBUTES = True              # Escribir los atributos predichos

# ============================================================================
# CONFIGURACIÓN DE DEPURACIÓN
# ============================================================================
SHOW_PROGRESS = True                # Barras de progreso tqdm
LOG_LEVEL = "INFO"                  # Nivel de logging: DEBUG, INFO, WARNING, ERROR
LOG_FORMAT = "[%(name)s] %(message)s"
SEED = 0
SEED_ENV_VAR = "JOINT_STRUCT_SEED"
