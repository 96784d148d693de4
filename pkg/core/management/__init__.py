# Management package for the workbench commands.
