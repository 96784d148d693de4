# Commands package: one command per experiment suite, plus exports.
