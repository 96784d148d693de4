from core.management.suite import SuiteCommand


class Command(SuiteCommand):
    help = "Run every experiment suite with one configuration and write a combined report."

    suite = "all"
