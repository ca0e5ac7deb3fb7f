from .models import parse_config, read_mpc_file, write_estimates_csv, write_mpc_file, write_report_csv
