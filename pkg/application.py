from main import app

# Point d'entrée ASGI (gunicorn -k uvicorn.workers.UvicornWorker application:app)
app = app
