# Log folder names used across the application

PIPELINE_MAIN_PROCESS_FOLDER = 'pipeline_main_process'

# Step 1: Load data and reference model
LOAD_INPUTS_FOLDER = '1_load_inputs'

# Step 2: Robust reference estimation (median/MAD + MCD)
ROBUST_REFERENCE_FOLDER = '2_robust_reference'

# Step 3: Flag observations outside the reference ellipsoid
FLAG_OUTLIERS_FOLDER = '3_flag_outliers'

# Step 4: Grand / guided tour
TOUR_FOLDER = '4_tour'

# Step 5: Render SVG frames
RENDER_FRAMES_FOLDER = '5_render_frames'

# Step 6: Directional clustering of flagged rows
CLUSTER_DIRECTIONS_FOLDER = '6_cluster_directions'

# Surface / reference samples and demo datasets
GENERATE_FOLDER = 'generate'
