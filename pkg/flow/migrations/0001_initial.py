# Generated by Django 4.2.7 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(help_text='Management command that produced this row', max_length=20)),
                ('label', models.CharField(blank=True, help_text='Run or sweep directory name, shared by every row of a sweep', max_length=200)),
                ('method', models.CharField(help_text="'df' for Decision Flow, 'mcmc' for the baseline", max_length=10)),
                ('mode', models.CharField(blank=True, help_text='exact or empirical (Decision Flow only)', max_length=10)),
                ('n_paths', models.PositiveIntegerField(blank=True, help_text='Prior paths K', null=True)),
                ('n_samples', models.PositiveIntegerField(help_text='Samples S')),
                ('seed', models.BigIntegerField(help_text='Master seed of the row')),
                ('reference', models.CharField(help_text='exact or mcmc', max_length=10)),
                ('delta1', models.FloatField(blank=True, null=True)),
                ('delta2', models.FloatField(blank=True, null=True)),
                ('tv', models.FloatField(blank=True, help_text='TV of the posterior terminal marginal', null=True)),
                ('sample_tv', models.FloatField(blank=True, help_text='TV of the sample histogram', null=True)),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('failed', 'Failed')], default='completed', max_length=10)),
                ('error_class', models.CharField(blank=True, max_length=20)),
                ('error_message', models.TextField(blank=True)),
                ('run_dir', models.CharField(blank=True, max_length=500)),
                ('timings', models.JSONField(default=dict, help_text='Wall-clock milliseconds per stage')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'ordering': ['-created_at'],
            },
        ),
        migrations.AddIndex(
            model_name='experimentrun',
            index=models.Index(fields=['label', 'method'], name='flow_run_label_method_idx'),
        ),
        migrations.AddIndex(
            model_name='experimentrun',
            index=models.Index(fields=['status'], name='flow_run_status_idx'),
        ),
    ]
