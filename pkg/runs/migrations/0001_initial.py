# Generated by Django 5.0.2 on 2026-10-17 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('experiment', models.CharField(max_length=255)),
                ('algorithm', models.CharField(choices=[('pmmh', 'pmmh'), ('dapmmh-lna', 'dapmmh-lna'), ('dapmmh-cle', 'dapmmh-cle'), ('approx-lna', 'approx-lna'), ('approx-cle', 'approx-cle')], max_length=20)),
                ('seed', models.BigIntegerField()),
                ('particles', models.PositiveIntegerField(blank=True, null=True)),
                ('iterations', models.PositiveIntegerField()),
                ('alpha1', models.FloatField()),
                ('alpha2_given_1', models.FloatField()),
                ('ess_min', models.FloatField(blank=True, null=True)),
                ('wall_time', models.FloatField(help_text='Seconds spent in the chain')),
                ('filter_calls', models.PositiveBigIntegerField(default=0)),
                ('output_dir', models.CharField(max_length=500)),
                ('config', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
