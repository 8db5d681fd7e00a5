import logging

from dotenv import load_dotenv
from flask import Flask

load_dotenv()

from routes import bp  # noqa: E402
from services.config_service import LOG_LEVEL  # noqa: E402

logging.basicConfig(level=LOG_LEVEL)

app = Flask(__name__)
app.register_blueprint(bp)

if __name__ == "__main__":
    app.run(host="0.0.0.0", port=8000)
