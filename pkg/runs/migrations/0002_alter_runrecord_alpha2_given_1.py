# Generated by Django 5.0.2 on 2026-10-17 14:40

from django.db import migrations, models


class Migration(migrations.Migration):

    dependencies = [
        ('runs', '0001_initial'),
    ]

    operations = [
        migrations.AlterField(
            model_name='runrecord',
            name='alpha2_given_1',
            field=models.FloatField(blank=True, null=True),
        ),
    ]
