import sys
from pathlib import Path

# Add the app directory to Python path
app_dir = Path(__file__).parent
sys.path.insert(0, str(app_dir))

try:
    from app.cli import main
except ImportError as e:
    print(f"Import error: {e}")
    print("Please make sure you have installed all dependencies:")
    print("pip install -r requirements.txt")
    sys.exit(1)

if __name__ == "__main__":
    # Without a subcommand, start the API as before
    sys.exit(main(sys.argv[1:] or ["serve"]))
