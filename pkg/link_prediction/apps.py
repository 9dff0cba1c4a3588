from django.apps import AppConfig


class LinkPredictionConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'link_prediction'
    verbose_name = 'Link Prediction'
