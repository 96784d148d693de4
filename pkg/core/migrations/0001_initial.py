# Generated by Django 5.2.11 on 2026-10-18 09:00

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('command', models.CharField(max_length=32)),
                ('model_descriptor', models.CharField(blank=True, max_length=64)),
                ('seed', models.BigIntegerField()),
                ('config', models.JSONField(default=dict)),
                ('status', models.CharField(choices=[('RUNNING', 'Running'), ('PASSED', 'Passed'), ('FAILED', 'Failed'), ('ERROR', 'Internal error')], default='RUNNING', max_length=10)),
                ('exit_code', models.PositiveSmallIntegerField(blank=True, null=True)),
                ('report_path', models.CharField(blank=True, max_length=512)),
                ('seconds', models.FloatField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='CheckRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
                ('name', models.CharField(max_length=128)),
                ('claim', models.TextField()),
                ('measured', models.FloatField(null=True)),
                ('target', models.FloatField(blank=True, null=True)),
                ('tolerance', models.FloatField(blank=True, null=True)),
                ('kind', models.CharField(choices=[('pass', 'Pass/fail'), ('info', 'Informational')], default='pass', max_length=4)),
                ('passed', models.BooleanField(null=True)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='checks', to='core.experimentrun')),
            ],
            options={
                'ordering': ['id'],
                'unique_together': {('run', 'name')},
            },
        ),
    ]
