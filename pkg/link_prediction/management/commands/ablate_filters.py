from ._sweep import SweepCommand


class Command(SweepCommand):
    help = 'Train and evaluate one model per filter length'
    key = 'filter_length'
    directory = 'filter-{}'
    values_help = 'Comma-separated filter lengths, e.g. 1,2,3,5,9'
    header = 'Filter Size\tMRR\tH@1'
    label = '1 x {}'
    report_name = 'ablate_filters.json'
