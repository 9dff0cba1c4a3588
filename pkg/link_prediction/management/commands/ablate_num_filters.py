from ._sweep import SweepCommand


class Command(SweepCommand):
    help = 'Train and evaluate one model per number of feature maps'
    key = 'num_filters'
    directory = 'num-filters-{}'
    values_help = 'Comma-separated feature map counts, e.g. 8,16,32,64'
    header = 'Feature Maps\tMRR\tH@1'
    report_name = 'ablate_num_filters.json'
